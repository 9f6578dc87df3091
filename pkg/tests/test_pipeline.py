import numpy as np
import pytest

from inrcompress.errors import NameMismatch
from inrcompress.package import ModelPackage
from inrcompress.pipeline import (
    PipelineConfig,
    compress_layer,
    compress_model,
    decompress_layer,
    decompress_model,
    normalized_scale,
    plan,
    raw_space_body_mse,
    requantize,
    verify,
)
from inrcompress.tensor_store import TensorEntry, build_archive

from helpers import quick_config, small_archive, smooth_matrix


@pytest.fixture(scope="module")
def compressed():
    archive = small_archive()
    cfg = quick_config(fallback_mse=1.0)
    return archive, cfg, compress_model(archive, cfg)


def test_plan_reasons():
    p = plan(small_archive(), PipelineConfig(min_bytes=0))
    assert p.selected_names == ["a.weight", "b.weight"]
    assert dict(p.skipped) == {"bn.weight": "norm_layer", "fc.bias": "kind_excluded",
                               "flat.weight": "rank_too_low"}
    assert "a.weight" in dict(plan(small_archive()).skipped)  # below the 100 KiB default


def test_modes_and_round_trip(compressed):
    archive, _, pkg = compressed
    modes = {l.name: l.mode for l in pkg.layers}
    assert modes["a.weight"] == "inr" and modes["bn.weight"] == "passthrough"
    buf = pkg.to_bytes()
    back = ModelPackage.from_bytes(buf)
    assert back.to_bytes() == buf
    rebuilt = decompress_model(back)
    assert rebuilt.names == archive.names
    for name in ("bn.weight", "fc.bias", "flat.weight"):
        assert rebuilt[name].data.tobytes() == archive[name].data.tobytes()


def test_outliers_are_bit_exact(compressed):
    archive, _, pkg = compressed
    for layer in pkg.layers:
        if layer.mode != "inr":
            continue
        recon = decompress_layer(layer)
        idx = layer.outliers.indices.astype(int)
        assert recon[idx].tobytes() == archive[layer.name].data[idx].tobytes()


def test_denormalization_scaling_identity(compressed):
    archive, _, pkg = compressed
    layer = pkg.layer("a.weight")
    recon64 = None
    from inrcompress.pipeline import reconstruct_normalized
    from inrcompress.preprocess import denormalize, patch_outliers

    recon64 = patch_outliers(denormalize(reconstruct_normalized(layer), layer.norm), layer.outliers)
    raw = raw_space_body_mse(archive["a.weight"], layer, recon64)
    assert raw == pytest.approx(layer.fit_mse * normalized_scale(layer), rel=1e-9)


def test_fit_mse_threshold_forces_fallback():
    archive = small_archive()
    pkg = compress_model(archive, quick_config(epochs=2, fallback_mse=1e-9))
    a = pkg.layer("a.weight")
    assert a.mode == "fallback" and a.reason == "fit_mse"
    assert decompress_layer(a).tobytes() == archive["a.weight"].data.tobytes()


def test_rejected_candidate_is_kept_in_memory():
    archive = small_archive()
    pkg = compress_model(archive, quick_config(epochs=2, fallback_mse=1e-9))
    layer = pkg.layer("a.weight")
    assert layer.rejected is not None and layer.rejected.mode == "inr"
    assert layer.rejected.fit_mse > 1e-9
    cand = requantize(pkg, archive, None, PipelineConfig(fallback_mse=float("inf")), keep_candidates=True)
    assert cand.layer("a.weight").mode == "inr"
    assert cand.layer("a.weight").fit_mse == layer.rejected.fit_mse
    # the stored package itself never carries the candidate
    assert ModelPackage.from_bytes(pkg.to_bytes()).layer("a.weight").rejected is None


def test_degenerate_tensor_falls_back():
    entry = TensorEntry.from_array(np.ones((6, 6)), "linear")
    layer = compress_layer(entry, 1.5, cfg=quick_config(), name="c")
    assert layer.mode == "fallback" and layer.reason == "DegenerateConstantTensor"


def test_job_count_does_not_change_bytes():
    archive = small_archive()
    one = compress_model(archive, quick_config(epochs=5, fallback_mse=1.0, jobs=1)).to_bytes()
    two = compress_model(archive, quick_config(epochs=5, fallback_mse=1.0, jobs=2)).to_bytes()
    assert one == two


def test_requantize_matches_direct_quantized_compress():
    archive = small_archive()
    cfg = quick_config(epochs=20, fallback_mse=1.0)
    base = compress_model(archive, cfg)
    direct = compress_model(archive, quick_config(epochs=20, fallback_mse=1.0, bits=8))
    again = requantize(base, archive, 8, cfg)
    assert again.to_bytes() == direct.to_bytes()


def test_quantized_package_round_trip(compressed):
    archive, cfg, pkg = compressed
    q = requantize(pkg, archive, 6, cfg)
    back = ModelPackage.from_bytes(q.to_bytes())
    assert back.layer("a.weight").bits == 6
    assert back.layer("a.weight").stored_nbytes() < pkg.layer("a.weight").stored_nbytes()
    assert decompress_model(back).names == archive.names


def test_verify_report(compressed):
    archive, _, pkg = compressed
    buf = pkg.to_bytes()
    rep = verify(archive, pkg, len(buf))
    a = rep.layer("a.weight")
    assert a.metrics.cosine > 0.9
    assert float(rep.total_ratio) == pytest.approx(len(__import__("inrcompress").tensor_store.archive_to_bytes(archive)) / len(buf))
    rows = rep.rows()
    assert rows[-1]["layer"] == "TOTAL" and len(rows) == len(archive) + 1
    table = rep.format_table()
    for col in ("Size (MB)", "W/A Bits", "Compression Ratio"):
        assert col in table
    other = build_archive([("zzz", TensorEntry.from_array(np.ones(3)))])
    with pytest.raises(NameMismatch):
        verify(other, pkg)


def test_manifest_records_conventions(compressed):
    _, _, pkg = compressed
    m = ModelPackage.from_bytes(pkg.to_bytes()).manifest
    assert m["conventions"]["fallback_mse_space"] == "normalized"
    assert m["config"]["ratio"] == 0.5 and "jobs" not in m["config"]
    assert m["format"] == "B2SM" and m["version"] == 1


def test_global_extrema_option():
    archive = small_archive()
    pkg = compress_model(archive, quick_config(epochs=3, fallback_mse=1.0, norm_extrema="global"))
    layer = pkg.layer("a.weight")
    data = archive["a.weight"].data
    assert layer.norm.w_min == float(data.min()) and layer.norm.w_max == float(data.max())
