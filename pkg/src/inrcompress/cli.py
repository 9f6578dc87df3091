"""Command-line front end: synth, compress, decompress, verify, inspect, zoo.

Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input,
3 every planned layer fell back to raw storage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import FormatError, InrCompressError, IoFailure
from .package import ModelPackage
from .pipeline import PipelineConfig, compress_model, decompress_model, plan, verify
from .synth import synth_archive
from .tensor_store import load_archive, save_archive
from .train import LossWeights, TrainConfig

log = logging.getLogger("inrcompress")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_ALL_FALLBACK = 3
SEED_ENV = "B2S_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bits(text: str) -> int:
    b = int(text)
    if not 2 <= b <= 16:
        raise argparse.ArgumentTypeError("bits must be in 2..16")
    return b


def _positive(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def _loss_weights(text: str) -> LossWeights:
    try:
        return LossWeights.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a,b,p: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="inrcompress", description="INR-based weight compression without training data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a seeded synthetic weight archive")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int)

    c = sub.add_parser("compress", help="compress an FTA1 archive into a B2SM package")
    c.add_argument("input")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--ratio", type=_positive, default=1.5)
    c.add_argument("--bits", type=_bits)
    c.add_argument("--epochs", type=int, default=2000)
    c.add_argument("--lr", type=_positive, default=1e-4)
    c.add_argument("--seed", type=int)
    c.add_argument("--loss-weights", type=_loss_weights, default=LossWeights())
    c.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    c.add_argument("--outlier-frac", type=float, default=0.01)
    c.add_argument("--fallback-mse", type=float, default=0.01)
    c.add_argument("--norm-extrema", choices=("body", "global"), default="body")
    c.add_argument("--precision", choices=("float32", "float64"), default="float32",
                   help="activation precision during fitting")
    c.add_argument("--report-dir", help="write per-layer loss CSVs and a loss figure here")

    d = sub.add_parser("decompress", help="rebuild an FTA1 archive from a package")
    d.add_argument("input")
    d.add_argument("-o", "--output", required=True)

    v = sub.add_parser("verify", help="compare a package against its source archive")
    v.add_argument("original")
    v.add_argument("package")
    v.add_argument("--csv", help="write the per-layer CSV here instead of stdout")
    v.add_argument("--plot-dir", help="write histogram and Q-Q figures here")

    i = sub.add_parser("inspect", help="print a package manifest as JSON")
    i.add_argument("package")

    z = sub.add_parser("zoo", help="run the bound-verification suite")
    z.add_argument("--seed", type=int)
    z.add_argument("--out-dir", help="write zoo.csv and zoo.png here")
    return p


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from exc


def _cmd_synth(args) -> int:
    archive = synth_archive(resolve_seed(args.seed))
    n = save_archive(archive, args.output)
    print(f"wrote {args.output} ({n} bytes, {len(archive)} tensors)")
    return EXIT_OK


def pipeline_config(args) -> PipelineConfig:
    if args.epochs < 1 or args.jobs < 1:
        raise UsageError("--epochs and --jobs must be >= 1")
    if not 0 < args.outlier_frac < 0.5:
        raise UsageError("--outlier-frac must lie in (0, 0.5)")
    seed = resolve_seed(args.seed)
    train = TrainConfig(epochs=args.epochs, lr0=args.lr, seed=seed, loss=args.loss_weights,
                        precision=args.precision)
    return PipelineConfig(
        ratio=args.ratio,
        bits=args.bits,
        outlier_fraction=args.outlier_frac,
        fallback_mse=args.fallback_mse,
        norm_extrema=args.norm_extrema,
        seed=seed,
        jobs=args.jobs,
        train=train,
    )


def _cmd_compress(args) -> int:
    cfg = pipeline_config(args)
    archive = load_archive(args.input)

    def progress(layer):
        log.info("%s: %s", layer.name, layer.mode)

    pkg = compress_model(archive, cfg, progress)
    n = pkg.save(args.output)
    planned = plan(archive, cfg).selected_names
    modes = {layer.name: layer.mode for layer in pkg.layers}
    print(f"wrote {args.output} ({n} bytes)")
    for name in planned:
        print(f"  {name}: {modes[name]}")
    if args.report_dir:
        _write_training_report(pkg, Path(args.report_dir))
    if planned and all(modes[name] == "fallback" for name in planned):
        print("warning: every planned layer fell back to raw storage", file=sys.stderr)
        return EXIT_ALL_FALLBACK
    return EXIT_OK


def _write_training_report(pkg: ModelPackage, out: Path) -> None:
    from .plotting import loss_figure

    out.mkdir(parents=True, exist_ok=True)
    histories = {}
    for layer in pkg.layers:
        if layer.report is None:
            continue
        layer.report.write_csv(out / f"{layer.name}.loss.csv")
        histories[layer.name] = layer.report.history
    if histories:
        loss_figure(histories, out / "loss.png")


def _cmd_decompress(args) -> int:
    pkg = ModelPackage.load(args.input)
    archive = decompress_model(pkg)
    n = save_archive(archive, args.output)
    print(f"wrote {args.output} ({n} bytes, {len(archive)} tensors)")
    return EXIT_OK


def verify_csv(report) -> str:
    buf = io.StringIO()
    out = csv.DictWriter(buf, fieldnames=report.CSV_COLUMNS, lineterminator="\n")
    out.writeheader()
    for row in report.rows():
        out.writerow(row)
    return buf.getvalue()


def _cmd_verify(args) -> int:
    archive = load_archive(args.original)
    try:
        with open(args.package, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    pkg = ModelPackage.from_bytes(buf)
    report = verify(archive, pkg, len(buf))
    print(report.format_table())
    text = verify_csv(report)
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        print()
        print(text, end="")
    if args.plot_dir:
        _write_verify_figures(archive, pkg, Path(args.plot_dir))
    return EXIT_OK


def _write_verify_figures(archive, pkg, out: Path) -> None:
    from .pipeline import decompress_layer
    from .plotting import histogram_figure, qq_figure

    for layer in pkg.layers:
        original = archive[layer.name].data
        histogram_figure(original, decompress_layer(layer), out / f"{layer.name}.hist.png", layer.name)
        qq_figure(original, out / f"{layer.name}.qq.png", layer.name)


def _cmd_inspect(args) -> int:
    try:
        with open(args.package, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    pkg = ModelPackage.from_bytes(buf)
    manifest = dict(pkg.manifest)
    manifest["layers"] = [layer.index_entry() for layer in pkg.layers]
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_zoo(args) -> int:
    from .zoo import rows_to_csv, rows_to_markdown, run_zoo

    rows = run_zoo(resolve_seed(args.seed))
    print(rows_to_markdown(rows), end="")
    if args.out_dir:
        from .plotting import zoo_figure

        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "zoo.csv").write_text(rows_to_csv(rows))
        zoo_figure(rows, out / "zoo.png")
    failed = [r for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks pass")
    return EXIT_OK


COMMANDS = {
    "synth": _cmd_synth,
    "compress": _cmd_compress,
    "decompress": _cmd_decompress,
    "verify": _cmd_verify,
    "inspect": _cmd_inspect,
    "zoo": _cmd_zoo,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, IoFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except InrCompressError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def main() -> None:
    sys.exit(run())
