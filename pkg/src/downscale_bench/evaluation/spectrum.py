"""Radially binned kinetic-energy spectra.

Wavenumbers are relative: ``k = 1`` is one full wave across the shorter side
of the domain. For an H x W grid with equal spacing, FFT index ``(ky, kx)``
maps to ``sqrt((ky * L / H)**2 + (kx * L / W)**2)`` with ``L = min(H, W)``,
rounded to the nearest integer bin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def relative_wavenumber(h: int, w: int) -> np.ndarray:
    ky = np.fft.fftfreq(h) * h
    kx = np.fft.fftfreq(w) * w
    short = min(h, w)
    return np.sqrt((ky[:, None] * short / h) ** 2 + (kx[None, :] * short / w) ** 2)


def wavenumber_bins(h: int, w: int) -> np.ndarray:
    return np.floor(relative_wavenumber(h, w) + 0.5).astype(np.int64)


@dataclass
class SpectrumCurve:
    k: np.ndarray
    E: np.ndarray
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.int64)
        self.E = np.asarray(self.E, dtype=np.float64)


def modal_energy(u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
    """0.5 * (|u_hat|^2 + |v_hat|^2) / N^2 per mode, after mean removal.

    Summed over all modes this equals 0.5 * mean(u'^2 + v'^2).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.zeros_like(u) if v is None else np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or u.shape != v.shape:
        raise ValueError("u and v must be matching 2-D fields")
    if min(u.shape) < 4:
        raise ValueError("spectrum needs at least a 4 x 4 grid")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("spectrum of non-finite field")
    n = u.size
    uh = np.fft.fft2(u - u.mean())
    vh = np.fft.fft2(v - v.mean())
    return 0.5 * (np.abs(uh) ** 2 + np.abs(vh) ** 2) / n**2


def binned_energy(u, v=None) -> np.ndarray:
    """Raw (unnormalized) energy for every integer bin, including the corners past K."""
    e = modal_energy(u, v)
    bins = wavenumber_bins(*e.shape)
    return np.bincount(bins.ravel(), weights=e.ravel())


def energy_spectrum(u, v=None) -> SpectrumCurve:
    """Normalized kinetic-energy spectrum over bins ``1..floor(min(H, W)/2)``.

    Constant fields give an all-zero curve with ``degenerate=True``.
    """
    u = np.asarray(u)
    raw = binned_energy(u, v)
    kmax = min(u.shape) // 2
    k = np.arange(1, kmax + 1)
    e = np.zeros(kmax)
    top = min(kmax + 1, raw.size)
    e[: top - 1] = raw[1:top]
    total = e.sum()
    if total <= 1e-300:
        return SpectrumCurve(k, np.zeros(kmax), degenerate=True)
    return SpectrumCurve(k, e / total, meta={"raw_total": float(raw.sum())})


def mean_curve(curves: list[SpectrumCurve]) -> SpectrumCurve:
    """Average of per-snapshot curves, renormalized."""
    if not curves:
        raise ValueError("no curves to average")
    live = [c for c in curves if not c.degenerate]
    if not live:
        return SpectrumCurve(curves[0].k, np.zeros_like(curves[0].E), degenerate=True)
    e = np.mean([c.E for c in live], axis=0)
    return SpectrumCurve(live[0].k, e / e.sum(), meta={"n_snapshots": len(live), "aggregation": "test-set mean"})


def fit_slope(curve: SpectrumCurve, k_lo: int, k_hi: int) -> float:
    """Least-squares slope of log E against log k over ``[k_lo, k_hi]``."""
    sel = (curve.k >= k_lo) & (curve.k <= k_hi) & (curve.E > 0)
    if sel.sum() < 2:
        raise ValueError("not enough positive bins to fit a slope")
    slope, _ = np.polyfit(np.log(curve.k[sel]), np.log(curve.E[sel]), 1)
    return float(slope)


def field_spectrum(data: np.ndarray) -> SpectrumCurve:
    """Spectrum of a C x H x W array: channels 0/1 are u/v, a single channel is u."""
    data = np.asarray(data)
    if data.shape[0] >= 2:
        return energy_spectrum(data[0], data[1])
    return energy_spectrum(data[0])
