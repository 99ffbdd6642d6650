"""Pixel-error metrics and their aggregation over channels and snapshots."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..io import GridField

PSNR_CAP_DB = 100.0
METRICS = ("mse", "mae", "in", "psnr")


def psnr(mse: float, data_range: float) -> float:
    """10 log10(range^2 / mse), capped once mse drops below range^2 * 1e-10."""
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    if mse < data_range**2 * 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(data_range**2 / mse))


@dataclass
class SnapshotMetrics:
    """Per-channel metrics of one prediction/truth pair."""

    mse: np.ndarray
    mae: np.ndarray
    inf: np.ndarray
    psnr: np.ndarray

    def aggregate(self) -> dict[str, float]:
        return {"mse": float(self.mse.mean()), "mae": float(self.mae.mean()),
                "in": float(self.inf.mean()), "psnr": float(self.psnr.mean())}


def pixel_metrics(pred: GridField, truth: GridField, data_range) -> SnapshotMetrics:
    p = np.asarray(pred.data, dtype=np.float64)
    t = np.asarray(truth.data, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction {p.shape} and truth {t.shape} differ in shape")
    rng = np.broadcast_to(np.asarray(data_range, dtype=np.float64), (p.shape[0],))
    if np.any(rng <= 0):
        raise ValueError("data_range must be positive")
    err = p - t
    mse = (err**2).mean(axis=(1, 2))
    mae = np.abs(err).mean(axis=(1, 2))
    inf = np.abs(err).max(axis=(1, 2))
    return SnapshotMetrics(mse, mae, inf, np.array([psnr(m, r) for m, r in zip(mse, rng)]))


def data_range_of(truths) -> np.ndarray:
    """Per-channel max - min over a whole ground-truth split."""
    lo = np.min([f.data.min(axis=(1, 2)) for f in truths], axis=0)
    hi = np.max([f.data.max(axis=(1, 2)) for f in truths], axis=0)
    return np.maximum(hi - lo, np.finfo(np.float64).tiny).astype(np.float64)


@dataclass
class MetricsReport:
    """Dataset-level metrics: channel mean per snapshot, then mean over snapshots."""

    mse: float
    mae: float
    inf: float
    psnr: float
    per_channel: dict[str, list[float]] = field(default_factory=dict)
    n_snapshots: int = 0
    eval_factor: int = 0
    label: str = ""
    family: str = ""
    setting: str = "standard"

    def to_json(self) -> dict:
        return {"label": self.label, "family": self.family, "setting": self.setting,
                "eval_factor": self.eval_factor, "n_snapshots": self.n_snapshots,
                "mse": self.mse, "mae": self.mae, "in": self.inf, "psnr": self.psnr,
                "per_channel": self.per_channel}


def aggregate(snapshots: list[SnapshotMetrics], eval_factor: int = 0, **labels) -> MetricsReport:
    """Order-independent mean over snapshots (``math.fsum``)."""
    if not snapshots:
        raise ValueError("no snapshots to aggregate")
    n = len(snapshots)
    per_snap = [s.aggregate() for s in snapshots]
    mean = {k: math.fsum(d[k] for d in per_snap) / n for k in METRICS}
    per_channel = {
        name: [math.fsum(float(getattr(s, attr)[c]) for s in snapshots) / n for c in range(len(snapshots[0].mse))]
        for name, attr in (("mse", "mse"), ("mae", "mae"), ("in", "inf"), ("psnr", "psnr"))
    }
    return MetricsReport(mean["mse"], mean["mae"], mean["in"], mean["psnr"], per_channel, n, eval_factor, **labels)
