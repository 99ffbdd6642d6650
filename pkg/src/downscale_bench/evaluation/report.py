"""Metric tables, spectrum CSVs and spectrum plots."""
from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from ..models.zoo import OPERATOR_FAMILIES
from .spectrum import SpectrumCurve

TABLE_COLUMNS = ("model", "family", "is_NO", "setting", "eval_factor", "MSE", "MAE", "IN", "PSNR")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "model"


def table_rows(results) -> list[dict]:
    rows = []
    for r in results:
        m = r.metrics
        rows.append({
            "model": m.label,
            "family": m.family,
            "is_NO": "yes" if m.family in OPERATOR_FAMILIES else "no",
            "setting": m.setting,
            "eval_factor": m.eval_factor,
            "MSE": m.mse,
            "MAE": m.mae,
            "IN": m.inf,
            "PSNR": m.psnr,
        })
    return rows


def format_table(rows: list[dict]) -> str:
    """Aligned plain-text table; floats printed with four significant digits."""
    cells = [list(TABLE_COLUMNS)]
    for row in rows:
        cells.append([f"{row[c]:.4g}" if isinstance(row[c], float) else str(row[c]) for c in TABLE_COLUMNS])
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_spectrum_csv(curve: SpectrumCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "E"])
        for k, e in zip(curve.k, curve.E):
            w.writerow([int(k), repr(float(e))])


def read_spectrum_csv(path) -> SpectrumCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return SpectrumCurve([int(r["k"]) for r in rows], [float(r["E"]) for r in rows])


def plot_spectra(curves: dict[str, SpectrumCurve], path, truth: SpectrumCurve | None = None,
                 zoom_from: float = 0.5, title: str = "") -> None:
    """Log-log spectra with a zoom panel over the upper part of the wavenumber range."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax, zoom) = plt.subplots(1, 2, figsize=(11, 4.2))
    series = ([("truth", truth)] if truth is not None else []) + list(curves.items())
    kmax = max(int(c.k.max()) for _, c in series)
    for name, c in series:
        style = dict(color="k", lw=2) if name == "truth" else dict(lw=1.2)
        pos = c.E > 0
        for a in (ax, zoom):
            a.loglog(c.k[pos], c.E[pos], label=name, **style)
    if truth is not None and np.any(truth.E > 1e-8):
        kmax = int(truth.k[truth.E > 1e-8].max())
    k0 = max(1.0, zoom_from * kmax)
    zoom.set_xlim(k0, kmax)
    lo = [c.E[(c.k >= k0) & (c.k <= kmax) & (c.E > 0)] for _, c in series]
    lo = np.concatenate([x for x in lo if x.size]) if any(x.size for x in lo) else np.array([1e-12, 1])
    zoom.set_ylim(lo.min() * 0.5, lo.max() * 2)
    for a in (ax, zoom):
        a.set_xlabel("relative wavenumber k")
        a.grid(True, which="both", alpha=0.3)
    ax.set_ylabel("normalized kinetic energy")
    zoom.set_title("high-k zoom")
    ax.set_title(title or "kinetic energy spectrum (test-set mean)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def emit_report(results, out_dir, formats=("csv", "txt", "spectra", "png")) -> dict[str, list[str]]:
    """Write the metrics table and spectrum artifacts for a list of evaluation results."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, list[str]] = {}
    rows = table_rows(results)
    if "csv" in formats:
        with open(out / "metrics.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        written["csv"] = [str(out / "metrics.csv")]
    if "txt" in formats:
        (out / "metrics.txt").write_text(format_table(rows))
        written["txt"] = [str(out / "metrics.txt")]
    if "spectra" in formats or "png" in formats:
        flags = {}
        by_setting: dict[tuple, dict] = {}
        for r in results:
            m = r.metrics
            key = (m.setting, m.eval_factor)
            name = f"{m.label}_{m.setting}_x{m.eval_factor}"
            by_setting.setdefault(key, {"truth": r.truth_spectrum, "curves": {}})["curves"][m.label] = r.spectrum
            flags[name] = {"underestimates_high_k": r.underestimates_high_k, **r.flag_detail}
            if "spectra" in formats:
                path = out / f"spectrum_{_slug(name)}.csv"
                write_spectrum_csv(r.spectrum, path)
                written.setdefault("spectra", []).append(str(path))
        if "spectra" in formats:
            for (setting, factor), group in by_setting.items():
                path = out / f"spectrum_truth_{setting}_x{factor}.csv"
                write_spectrum_csv(group["truth"], path)
                written["spectra"].append(str(path))
            meta = {"aggregation": "test-set mean curve", "flags": flags}
            (out / "spectrum_meta.json").write_text(json.dumps(meta, indent=2))
        if "png" in formats:
            for (setting, factor), group in by_setting.items():
                path = out / f"spectrum_{setting}_x{factor}.png"
                plot_spectra(group["curves"], path, group["truth"], title=f"{setting}, factor {factor}")
                written.setdefault("png", []).append(str(path))
    return written
