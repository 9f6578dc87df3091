"""End-to-end compression: plan, per-layer INR fit with fallback, package,
reconstruct, verify."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import (
    DegenerateConstantTensor,
    DegenerateRange,
    NameMismatch,
    NonFiniteLoss,
    RankTooLow,
    TooSmallTensor,
)
from .inr_net import DEFAULT_OMEGA0, DEFAULT_SIGMA, InrNetwork, forward, size_inr
from .package import LayerPackage, ModelPackage
from .preprocess import (
    DEFAULT_OUTLIER_FRACTION,
    coordinate_grid,
    denormalize,
    extract_outliers,
    flatten_to_2d,
    normalize,
    patch_outliers,
)
from .quantizer import dequantize, quantize
from .rng import derive_seed
from .tensor_store import ReconMetrics, TensorArchive, TensorEntry, archive_nbytes, metrics
from .train import TrainConfig, fit_inr

log = logging.getLogger(__name__)

MIN_LAYER_BYTES = 100 * 1024
COMPRESSIBLE_KINDS = ("conv", "linear")


@dataclass(frozen=True)
class PipelineConfig:
    ratio: float = 1.5
    bits: int | None = None
    outlier_fraction: float = DEFAULT_OUTLIER_FRACTION
    fallback_mse: float = 0.01
    norm_extrema: str = "body"  # "body" or "global"
    min_bytes: int = MIN_LAYER_BYTES
    omega0: float = DEFAULT_OMEGA0
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    jobs: int = 1
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=2000))

    def __post_init__(self):
        if not self.ratio > 0:
            raise ValueError("ratio must be positive")
        if self.bits is not None and not 2 <= self.bits <= 16:
            raise ValueError("bits must be in 2..16")
        if self.norm_extrema not in ("body", "global"):
            raise ValueError("norm_extrema must be 'body' or 'global'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("jobs")  # results do not depend on the worker count
        return d


@dataclass(frozen=True)
class PlanItem:
    name: str
    ratio: float
    bits: int | None


@dataclass
class CompressionPlan:
    selected: list[PlanItem]
    skipped: list[tuple[str, str]]

    @property
    def selected_names(self) -> list[str]:
        return [item.name for item in self.selected]


def skip_reason(entry: TensorEntry, cfg: PipelineConfig) -> str | None:
    kind = entry.kind.value
    if kind == "norm":
        return "norm_layer"
    if kind not in COMPRESSIBLE_KINDS:
        return "kind_excluded"
    if len(entry.shape) < 2:
        return "rank_too_low"
    if entry.nbytes <= cfg.min_bytes:
        return "too_small"
    return None


def plan(archive: TensorArchive, cfg: PipelineConfig = PipelineConfig()) -> CompressionPlan:
    """Select conv/linear tensors of rank >= 2 larger than ``cfg.min_bytes``."""
    selected, skipped = [], []
    for name, entry in archive.entries.items():
        reason = skip_reason(entry, cfg)
        if reason is None:
            selected.append(PlanItem(name, cfg.ratio, cfg.bits))
        else:
            skipped.append((name, reason))
    return CompressionPlan(selected, skipped)


def _raw_layer(name, entry, mode, reason, seed=None, report=None) -> LayerPackage:
    return LayerPackage(
        name=name,
        original_shape=entry.shape,
        kind=entry.kind.value,
        mode=mode,
        raw=np.array(entry.data, dtype=np.float32),
        reason=reason,
        seed=seed,
        report=report,
    )


def stored_network(layer: LayerPackage) -> InrNetwork:
    """The INR exactly as a decoder sees it (dequantized or float32-rounded)."""
    shapes = [s for _, s in layer.arch.layer_shapes()]
    if layer.quantized is not None:
        params = [dequantize(b).reshape(s) for b, s in zip(layer.quantized, shapes)]
    else:
        params = [np.asarray(p, dtype=np.float64) for p in layer.inr_params]
    return InrNetwork(layer.arch, params)


def reconstruct_normalized(layer: LayerPackage) -> np.ndarray:
    """INR output on the layer's grid, in normalized units, flat."""
    rows, cols = layer.grid
    y, _ = forward(stored_network(layer), coordinate_grid(rows, cols), keep_tape=False)
    return y


def _body_mask(n: int, layer: LayerPackage) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[layer.outliers.indices.astype(np.int64)] = False
    return mask


def store_params(layer: LayerPackage, params, bits: int | None) -> None:
    """Store trained parameters as float32, or quantize their float32 values.

    Quantizing the float32 copy makes a quantized package derivable from an
    unquantized one byte for byte (see ``requantize``).
    """
    f32 = [np.asarray(p, dtype=np.float32) for p in params]
    if bits is None:
        layer.inr_params = f32
        layer.quantized = None
    else:
        layer.quantized = [quantize(p, bits) for p in f32]
        layer.inr_params = None


def compress_layer(
    entry: TensorEntry,
    ratio: float,
    bits: int | None = None,
    cfg: PipelineConfig = PipelineConfig(),
    name: str = "",
    seed: int | None = None,
    progress=None,
) -> LayerPackage:
    """Fit one tensor; falls back to storing it raw when the fit is not good enough."""
    seed = cfg.seed if seed is None else seed
    try:
        matrix, meta = flatten_to_2d(entry)
        flat = entry.data
        body, outliers = extract_outliers(flat, cfg.outlier_fraction)
        extrema = None
        if cfg.norm_extrema == "global":
            extrema = (float(flat.min()), float(flat.max()))
        w_norm, norm = normalize(body, extrema)
        spec = size_inr(flat.size, ratio, max(meta.rows, meta.cols), cfg.omega0, cfg.sigma)
        train_cfg = replace(cfg.train, seed=seed)
        net, report = fit_inr(w_norm.reshape(meta.rows, meta.cols), spec, train_cfg, progress)
    except (DegenerateConstantTensor, DegenerateRange, TooSmallTensor, RankTooLow, NonFiniteLoss) as exc:
        log.info("%s: falling back (%s)", name, type(exc).__name__)
        return _raw_layer(name, entry, "fallback", type(exc).__name__, seed)

    layer = LayerPackage(
        name=name,
        original_shape=entry.shape,
        kind=entry.kind.value,
        mode="inr",
        arch=spec,
        outliers=outliers,
        norm=norm,
        grid=(meta.rows, meta.cols),
        seed=seed,
        norm_extrema=cfg.norm_extrema,
        report=report,
    )
    return _finalize(layer, net.params, bits, w_norm, entry, cfg)


def _finalize(layer, params, bits, w_norm, entry, cfg) -> LayerPackage:
    store_params(layer, params, bits)
    update_fit_mse(layer, w_norm)
    if not (layer.fit_mse <= cfg.fallback_mse):
        log.info("%s: fit MSE %.4g above %.4g, storing raw", layer.name, layer.fit_mse, cfg.fallback_mse)
        raw = _raw_layer(layer.name, entry, "fallback", "fit_mse", layer.seed, layer.report)
        raw.rejected = layer
        return raw
    return layer


def update_fit_mse(layer: LayerPackage, w_norm) -> float:
    """Normalized-space MSE of the stored INR over the non-outlier positions."""
    diff = reconstruct_normalized(layer) - np.asarray(w_norm).reshape(-1)
    mask = _body_mask(diff.size, layer)
    layer.fit_mse = float(np.mean(diff[mask] ** 2))
    return layer.fit_mse


def _compress_job(args):
    name, entry, item, cfg = args
    return compress_layer(entry, item.ratio, item.bits, cfg, name, derive_seed(cfg.seed, name))


def compress_model(archive: TensorArchive, cfg: PipelineConfig = PipelineConfig(), progress=None) -> ModelPackage:
    """Compress every planned layer; everything else is carried verbatim."""
    the_plan = plan(archive, cfg)
    jobs = [
        (item.name, archive[item.name], item, cfg)
        for item in sorted(the_plan.selected, key=lambda it: it.name)
    ]
    workers = max(1, min(cfg.jobs, len(jobs)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(_compress_job, jobs))
    else:
        fitted = []
        for job in jobs:
            fitted.append(_compress_job(job))
            if progress is not None:
                progress(fitted[-1])
    layers = {layer.name: layer for layer in fitted}
    for name, reason in the_plan.skipped:
        layers[name] = _raw_layer(name, archive[name], "passthrough", reason)
    manifest = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "entry_order": list(archive.names),
        "source_hash": f"{archive.source_hash:016x}",
        "conventions": {
            "fallback_mse_space": "normalized",
            "fit_mse_positions": "non_outlier",
            "lr_schedule": "cosine_restart" if cfg.train.restart else "cosine_single",
            "norm_extrema": cfg.norm_extrema,
            "psnr_cap_db": 200.0,
        },
    }
    return ModelPackage(manifest, [layers[n] for n in sorted(layers)])


def requantize(pkg: ModelPackage, archive: TensorArchive, bits: int | None,
               cfg: PipelineConfig | None = None, keep_candidates: bool = False) -> ModelPackage:
    """Re-store every INR layer of an unquantized package at ``bits``.

    Quantization happens after fitting, so this yields what compressing
    with ``bits`` would have produced for every layer that kept its INR.
    The fallback rule is re-evaluated on the dequantized network, which
    needs the source ``archive`` to rebuild the normalized targets.  With
    ``keep_candidates`` the INR candidates that earlier fallbacks rejected
    (held in memory on the fallback layers) are re-stored as well.
    """
    cfg = cfg or PipelineConfig()
    layers = []
    for layer in pkg.layers:
        if layer.mode != "inr" and keep_candidates and layer.rejected is not None:
            layer = layer.rejected
        if layer.mode != "inr":
            layers.append(layer)
            continue
        if layer.inr_params is None:
            raise ValueError(f"{layer.name}: parameters are already quantized")
        entry = archive[layer.name]
        body, _ = extract_outliers(entry.data, layer.outliers.fraction)
        extrema = None
        if layer.norm_extrema == "global":
            extrema = (float(entry.data.min()), float(entry.data.max()))
        w_norm, _ = normalize(body, extrema)
        params = [p.astype(np.float64) for p in layer.inr_params]
        layers.append(_finalize(replace(layer), params, bits, w_norm, entry, cfg))
    manifest = dict(pkg.manifest)
    manifest["config"] = dict(manifest.get("config", {}), bits=bits)
    return ModelPackage(manifest, layers)


def decompress_layer(layer: LayerPackage) -> np.ndarray:
    """Flat float32 reconstruction of one entry."""
    if layer.mode != "inr":
        return np.array(layer.raw, dtype=np.float32)
    w = denormalize(reconstruct_normalized(layer), layer.norm).astype(np.float32)
    return patch_outliers(w, layer.outliers)


def decompress_model(pkg: ModelPackage) -> TensorArchive:
    by_name = {layer.name: layer for layer in pkg.layers}
    order = pkg.manifest.get("entry_order") or sorted(by_name)
    if sorted(order) != sorted(by_name):
        raise NameMismatch("manifest entry order does not match the stored layers")
    entries = {}
    for name in order:
        layer = by_name[name]
        entries[name] = TensorEntry(layer.original_shape, layer.kind, decompress_layer(layer))
    return TensorArchive(entries)


@dataclass
class LayerVerify:
    name: str
    kind: str
    mode: str
    original_bytes: int
    stored_bytes: int
    bits: int | None
    metrics: ReconMetrics | None
    outliers: int
    fit_mse: float | None

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.original_bytes, self.stored_bytes)

    @property
    def fallback(self) -> bool:
        return self.mode == "fallback"

    @property
    def wa_bits(self) -> str:
        return f"{self.bits or 32}/32"


@dataclass
class VerifyReport:
    layers: list[LayerVerify]
    original_bytes: int
    package_bytes: int

    @property
    def total_ratio(self) -> Fraction:
        return Fraction(self.original_bytes, self.package_bytes)

    def layer(self, name: str) -> LayerVerify:
        return next(lv for lv in self.layers if lv.name == name)

    CSV_COLUMNS = (
        "layer", "kind", "mode", "original_bytes", "stored_bytes", "w_bits",
        "compression_ratio", "mse", "rel_mae", "cosine", "psnr", "outliers", "fit_mse",
    )

    def rows(self) -> list[dict]:
        out = []
        for lv in self.layers:
            m = lv.metrics
            out.append(
                {
                    "layer": lv.name,
                    "kind": lv.kind,
                    "mode": lv.mode,
                    "original_bytes": lv.original_bytes,
                    "stored_bytes": lv.stored_bytes,
                    "w_bits": lv.bits or 32,
                    "compression_ratio": float(lv.ratio),
                    "mse": m.mse if m else "",
                    "rel_mae": m.rel_mae if m else "",
                    "cosine": m.cosine if m else "",
                    "psnr": m.psnr if m else "",
                    "outliers": lv.outliers,
                    "fit_mse": "" if lv.fit_mse is None else lv.fit_mse,
                }
            )
        out.append(
            {
                "layer": "TOTAL",
                "kind": "",
                "mode": "",
                "original_bytes": self.original_bytes,
                "stored_bytes": self.package_bytes,
                "w_bits": "",
                "compression_ratio": float(self.total_ratio),
                "mse": "", "rel_mae": "", "cosine": "", "psnr": "", "outliers": "", "fit_mse": "",
            }
        )
        return out

    def format_table(self) -> str:
        head = ("Layer", "Mode", "Size (MB)", "W/A Bits", "Compression Ratio",
                "Rel MAE", "Cosine", "PSNR", "Outliers")
        lines = []
        for lv in self.layers:
            m = lv.metrics
            lines.append((
                lv.name, lv.mode, f"{lv.stored_bytes / 2**20:.3f}", lv.wa_bits,
                f"{float(lv.ratio):.3f}",
                f"{m.rel_mae:.4f}" if m else "-",
                f"{m.cosine:.4f}" if m else "-",
                f"{m.psnr:.2f}" if m else "-",
                str(lv.outliers),
            ))
        lines.append(("TOTAL", "", f"{self.package_bytes / 2**20:.3f}", "", f"{float(self.total_ratio):.3f}",
                      "", "", "", ""))
        widths = [max(len(h), *(len(r[i]) for r in lines)) for i, h in enumerate(head)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        out = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
        out += [fmt.format(*r) for r in lines]
        return "\n".join(out)


def verify(archive: TensorArchive, pkg: ModelPackage, package_bytes: int | None = None) -> VerifyReport:
    """Per-layer raw-space metrics and byte-exact compression ratios."""
    by_name = {layer.name: layer for layer in pkg.layers}
    if set(by_name) != set(archive.names):
        raise NameMismatch(
            f"archive and package differ: {sorted(set(by_name) ^ set(archive.names))}"
        )
    if package_bytes is None:
        package_bytes = len(pkg.to_bytes())
    rows = []
    for name, entry in archive.entries.items():
        layer = by_name[name]
        if tuple(layer.original_shape) != entry.shape:
            raise NameMismatch(f"{name}: shape {layer.original_shape} vs {entry.shape}")
        recon = decompress_layer(layer)
        try:
            m = metrics(entry.data, recon)
        except ValueError:
            m = None
        rows.append(
            LayerVerify(
                name=name,
                kind=entry.kind.value,
                mode=layer.mode,
                original_bytes=entry.nbytes,
                stored_bytes=layer.stored_nbytes(),
                bits=layer.bits,
                metrics=m,
                outliers=len(layer.outliers) if layer.outliers is not None else 0,
                fit_mse=layer.fit_mse,
            )
        )
    return VerifyReport(rows, archive_nbytes(archive), package_bytes)


def default_jobs() -> int:
    return os.cpu_count() or 1


def raw_space_body_mse(entry: TensorEntry, layer: LayerPackage, reconstructed=None) -> float:
    """Raw-space MSE over non-outlier positions (the counterpart of ``fit_mse``)."""
    recon = decompress_layer(layer) if reconstructed is None else reconstructed
    diff = np.asarray(recon, dtype=np.float64) - entry.data.astype(np.float64)
    return float(np.mean(diff[_body_mask(diff.size, layer)] ** 2))


def normalized_scale(layer: LayerPackage) -> float:
    return layer.norm.half_range ** 2 if layer.norm else math.nan
