"""Command-line entry point: ``downscale-bench <command> [flags]``.

Every command reads an optional JSON config, lets flags override it, writes
its artifacts under ``--out`` together with the resolved config, and prints a
one-line summary. Exit status: 0 success, 1 invalid input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .datagen import DatasetConfig, build_pairs
from .evaluation import emit_report, field_spectrum, fit_slope, mean_curve, write_spectrum_csv
from .evaluation.harness import SUPPORT_FLOOR, bicubic_reference, evaluate_model
from .evaluation.report import plot_spectra, read_spectrum_csv
from .models import (
    ModelSpec,
    PipelineSpec,
    default_placement,
    load_checkpoint,
    param_count,
    rrdb_extractor_param_count,
)
from .training import TrainConfig, sweep_extractor, sweep_modes, train, write_sweep_table

SCHEMA_VERSION = 1
COMMANDS = ("datagen", "train", "evaluate", "sweep-modes", "sweep-extractor", "spectrum", "info", "plot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="downscale-bench", description="Zero-shot downscaling benchmark.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config; flags override its values")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--model", help="model family")
        p.add_argument("--checkpoint", type=Path)
        p.add_argument("--eval-factor", type=int)
        p.add_argument("--train-factor", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--data", type=Path, help="dataset manifest (or snapshot / report directory)")
        p.add_argument("--spec", type=Path, help="dataset spec JSON for datagen")
    return parser


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc


def _echo_config(out: Path, command: str, config: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION, "command": command, **config}
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def _model_spec(cfg: dict, args) -> ModelSpec:
    block = dict(cfg.get("model", {}))
    if args.model:
        block["family"] = args.model
    if args.train_factor:
        block["train_factor"] = args.train_factor
    if "family" not in block:
        raise ValueError("no model family given (use --model or a 'model' config block)")
    return ModelSpec.from_json(block)


def _train_config(cfg: dict, args) -> TrainConfig:
    block = dict(cfg.get("train", {}))
    if args.seed is not None:
        block["seed"] = args.seed
    if args.workers is not None:
        block["workers"] = args.workers
    return TrainConfig.from_json(block)


def _stats_near(manifest: Path) -> io.NormStats | None:
    path = manifest.parent / "stats.json"
    return io.read_stats(path) if path.exists() else None


def _require(path: Path | None, flag: str) -> Path:
    if path is None:
        raise ValueError(f"{flag} is required")
    if not Path(path).exists():
        raise ValueError(f"{flag} {path} does not exist")
    return Path(path)


# --- commands -----------------------------------------------------------------


def cmd_datagen(args) -> str:
    cfg = _load_json(args.spec) or _load_json(args.config)
    cfg = cfg.get("dataset", cfg)
    dc = DatasetConfig.from_json(cfg)
    if args.seed is not None:
        dc.seed = args.seed
    if args.train_factor:
        dc.train_factor = args.train_factor
    if args.eval_factor and args.eval_factor not in dc.eval_factors and args.eval_factor != dc.train_factor:
        dc.eval_factors = sorted(set(dc.eval_factors) | {args.eval_factor})
    out = args.out
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)

    def dump(split, factor):
        rows = []
        for i, (lr, hr, region) in enumerate(build_pairs(dc, split, factor)):
            stem = f"{split}_x{factor}_r{region}_{i:05d}"
            io.write_snapshot(lr, snap_dir / f"{stem}_lr.snap")
            io.write_snapshot(hr, snap_dir / f"{stem}_hr.snap")
            rows.append((io.ManifestRow(f"snapshots/{stem}_lr.snap", f"snapshots/{stem}_hr.snap", region, split), hr))
        return rows

    rows = {s: dump(s, dc.train_factor) for s in ("train", "val", "test")}
    io.write_manifest([r for s in rows.values() for r, _ in s], out / "manifest.json", factor=dc.train_factor)
    io.write_stats(io.compute_norm_stats([hr for _, hr in rows["train"]]), out / "stats.json")
    for f in dc.eval_factors:
        if f == dc.train_factor:
            continue
        zs = dump("test", f)
        io.write_manifest([r for r, _ in zs], out / f"manifest_x{f}.json", factor=f, train_factor=dc.train_factor)
    _echo_config(out, "datagen", {"dataset": dc.to_json()})
    n = sum(len(v) for v in rows.values())
    return f"datagen: {n} pairs at x{dc.train_factor}, zero-shot test sets {dc.eval_factors or 'none'} -> {out}"


def cmd_train(args) -> str:
    cfg = _load_json(args.config)
    manifest = _require(args.data, "--data")
    spec = _model_spec(cfg, args)
    tc = _train_config(cfg, args)
    pipe_block = cfg.get("pipeline", {})
    pipeline = PipelineSpec(pipe_block.get("placement", default_placement(spec.family)),
                            spec.train_factor, spec.train_factor)
    stats = _stats_near(manifest)
    train_ds = io.load_split(manifest, "train", stats)
    val_ds = io.load_split(manifest, "val", stats)
    _echo_config(args.out, "train", {"model": spec.to_json(), "train": tc.to_json(),
                                     "pipeline": pipeline.to_json(), "data": str(manifest)})
    report, _ = train(spec, pipeline, train_ds, tc, val=val_ds if len(val_ds) else None, out_dir=args.out)
    return (f"train: {spec.family} best epoch {report.best_epoch} val MSE {report.best_val_mse:.6g} "
            f"params {report.param_count} -> {report.checkpoint}")


def _test_manifest(manifest: Path, eval_factor: int, train_factor: int) -> Path:
    if eval_factor == train_factor:
        return manifest
    sibling = manifest.parent / f"manifest_x{eval_factor}.json"
    _, meta = io.read_manifest(manifest)
    if meta.get("factor") == eval_factor:
        return manifest
    if sibling.exists():
        return sibling
    raise ValueError(f"no test set at factor {eval_factor}: expected {sibling}")


def cmd_evaluate(args) -> str:
    cfg = _load_json(args.config)
    ckpt = _require(args.checkpoint, "--checkpoint")
    manifest = _require(args.data, "--data")
    model, meta = load_checkpoint(ckpt)
    if args.model and args.model != model.spec.family:
        raise ValueError(f"checkpoint holds a {model.spec.family} model, not {args.model}")
    tf = model.spec.train_factor
    if args.train_factor and args.train_factor != tf:
        raise ValueError(f"checkpoint was trained at factor {tf}, not {args.train_factor}")
    ef = args.eval_factor or cfg.get("eval_factor", tf)
    placement = cfg.get("placement", meta.get("pipeline", {}).get("placement", default_placement(model.spec.family)))
    pipeline = PipelineSpec(placement, tf, ef)
    stats = io.NormStats.from_json(meta["stats"]) if "stats" in meta else _stats_near(manifest)
    test = io.load_split(_test_manifest(manifest, ef, tf), "test")
    results = [evaluate_model(model, pipeline, test, stats, label=cfg.get("label", model.spec.family))]
    if cfg.get("include_bicubic", True):
        results.append(bicubic_reference(pipeline, test))
    emit_report(results, args.out)
    (args.out / "flags.json").write_text(json.dumps(
        {r.metrics.label: {"underestimates_high_k": r.underestimates_high_k, **r.flag_detail} for r in results},
        indent=2))
    _echo_config(args.out, "evaluate", {"checkpoint": str(ckpt), "data": str(manifest),
                                        "pipeline": pipeline.to_json(), **cfg})
    m = results[0].metrics
    return f"evaluate: {m.label} {m.setting} x{ef} MSE {m.mse:.6g} PSNR {m.psnr:.4g} -> {args.out}"


def _sweep_inputs(cfg, args):
    manifest = _require(args.data, "--data")
    stats = _stats_near(manifest)
    splits = {s: io.load_split(manifest, s, stats) for s in ("train", "val", "test")}
    return splits, _model_spec(cfg, args), _train_config(cfg, args)


def _write_sweep(out: Path, name: str, rows, curves) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_table(rows, out / f"{name}.csv")
    named = {}
    for key, curve in curves.items():
        if curve is None:
            continue
        label = "_".join(str(k) for k in key)
        write_spectrum_csv(curve, out / f"{name}_spectrum_{label}.csv")
        named[label] = curve
    if named:
        plot_spectra(named, out / f"{name}_spectra.png", title=name)


def cmd_sweep_modes(args) -> str:
    cfg = _load_json(args.config)
    splits, spec, tc = _sweep_inputs(cfg, args)
    modes = cfg.get("modes", [4, 8, 16])
    _echo_config(args.out, "sweep-modes", {"model": spec.to_json(), "train": tc.to_json(), "modes": modes,
                                           "data": str(args.data)})
    rows, curves = sweep_modes(spec, modes, splits["train"], tc, val=splits["val"], test=splits["test"],
                               out_dir=args.out / "runs")
    _write_sweep(args.out, "sweep_modes", rows, curves)
    best = min(rows, key=lambda r: r["val_mse"] if r["val_mse"] is not None else np.inf)
    return f"sweep-modes: {len(rows)} runs, best modes {best['modes']} (val MSE {best['val_mse']:.6g})"


def cmd_sweep_extractor(args) -> str:
    cfg = _load_json(args.config)
    splits, spec, tc = _sweep_inputs(cfg, args)
    blocks = cfg.get("blocks", [6, 12, 24])
    extractors = cfg.get("extractors", ["rrdb"])
    _echo_config(args.out, "sweep-extractor", {"model": spec.to_json(), "train": tc.to_json(), "blocks": blocks,
                                               "extractors": extractors, "data": str(args.data)})
    rows, curves = sweep_extractor(spec, blocks, splits["train"], tc, val=splits["val"], test=splits["test"],
                                   extractors=extractors, out_dir=args.out / "runs")
    _write_sweep(args.out, "sweep_extractor", rows, curves)
    return f"sweep-extractor: {len(rows)} runs over {extractors} x {blocks}"


def cmd_spectrum(args) -> str:
    cfg = _load_json(args.config)
    data = _require(args.data, "--data")
    if data.suffix == ".snap":
        fields = [io.read_snapshot(data)]
    else:
        split = cfg.get("split", "test")
        which = cfg.get("which", "hr")
        ds = io.load_split(data, split)
        fields = [getattr(p, which) for p in ds.pairs]
        if not fields:
            raise ValueError(f"split {split!r} of {data} is empty")
    curve = mean_curve([field_spectrum(f.data) for f in fields]) if len(fields) > 1 else field_spectrum(fields[0].data)
    args.out.mkdir(parents=True, exist_ok=True)
    write_spectrum_csv(curve, args.out / "spectrum.csv")
    # default band: bins that actually carry energy
    supported = curve.k[curve.E > SUPPORT_FLOOR]
    k_top = int(supported.max()) if supported.size else int(curve.k.max())
    k_lo, k_hi = cfg.get("fit_band", [2, max(3, k_top)])
    slope = fit_slope(curve, k_lo, k_hi) if not curve.degenerate else float("nan")
    (args.out / "spectrum_fit.json").write_text(json.dumps({"slope": slope, "fit_band": [k_lo, k_hi],
                                                            "n_fields": len(fields)}, indent=2))
    _echo_config(args.out, "spectrum", {"data": str(data), **cfg})
    return f"spectrum: {len(fields)} field(s), slope {slope:.3f} over k in [{k_lo}, {k_hi}]"


def cmd_info(args) -> str:
    cfg = _load_json(args.config)
    cfg = {"model": cfg.get("model", cfg)} if "model" in cfg or "family" in cfg or args.model else cfg
    spec = _model_spec(cfg, args)
    info = {"family": spec.family, "spec": spec.to_json(), "param_count": param_count(spec)}
    if spec.family == "esrgan_lite" or (spec.family in ("dfno", "duno_lite", "plugin") and spec.extractor == "rrdb"):
        width = spec.width if spec.family == "esrgan_lite" else spec.extractor_width
        info["rrdb_extractor_param_count"] = rrdb_extractor_param_count(
            spec.in_channels, width, spec.n_extractor_blocks, spec.growth)
    print(json.dumps(info, indent=2))
    return f"info: {spec.family} param_count {info['param_count']}"


def cmd_plot(args) -> str:
    data = _require(args.data, "--data")
    files = sorted(data.glob("spectrum_*.csv")) if data.is_dir() else [data]
    truths = {f: read_spectrum_csv(f) for f in files if f.name.startswith("spectrum_truth_")}
    curves = {f.stem.removeprefix("spectrum_"): read_spectrum_csv(f) for f in files if f not in truths}
    if not curves and not truths:
        raise ValueError(f"no spectrum CSV files under {data}")
    args.out.mkdir(parents=True, exist_ok=True)
    written = []
    settings = {f.stem.removeprefix("spectrum_truth_"): c for f, c in truths.items()} or {"all": None}
    for setting, truth in settings.items():
        group = {k.removesuffix("_" + setting): c for k, c in curves.items() if setting == "all" or k.endswith(setting)}
        path = args.out / f"spectrum_{setting}.png"
        plot_spectra(group, path, truth, title=setting)
        written.append(path.name)
    return f"plot: wrote {', '.join(written)}"


HANDLERS = {
    "datagen": cmd_datagen,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep-modes": cmd_sweep_modes,
    "sweep-extractor": cmd_sweep_extractor,
    "spectrum": cmd_spectrum,
    "info": cmd_info,
    "plot": cmd_plot,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        summary = HANDLERS[args.command](args)
    except (ValueError, KeyError, TypeError, FileNotFoundError) as exc:
        print(f"downscale-bench {args.command}: invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"downscale-bench {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(summary)
    return 0


def main() -> None:
    sys.exit(run())
