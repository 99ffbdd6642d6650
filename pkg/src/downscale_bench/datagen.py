"""Synthetic ground truth, LR construction and patch extraction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .io import GridField, default_channels
from .regrid import bicubic_resize


@dataclass
class GrfSpec:
    H: int = 64
    W: int = 64
    C: int = 2
    alpha: float = 3.0
    k_min: int = 1
    k_max: int = 12
    seed: int = 0
    amplitude_std: float = 1.0
    dx_km: float = 25.0

    def __post_init__(self):
        band = min(self.H, self.W) // 2
        if not (1 <= self.k_min <= self.k_max <= band):
            raise ValueError(f"need 1 <= k_min <= k_max <= {band}, got [{self.k_min}, {self.k_max}]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.C < 1:
            raise ValueError("C must be >= 1")


@dataclass
class CrossSimSpec:
    blur_sigma: float = 0.0
    bias_amplitude: float = 0.0
    bias_wavenumber: int = 1
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
        if self.blur_sigma < 0 or self.noise_std < 0:
            raise ValueError("blur_sigma and noise_std must be >= 0")


def _mode_table(spec: GrfSpec):
    """Integer (ky, kx) modes in the band, in a grid-independent order.

    Modes are enumerated on the lattice of the domain, not the grid, so the
    same seed yields the same continuous field at any resolution whose
    Nyquist band covers ``k_max``.
    """
    short = min(spec.H, spec.W)
    ry = int(math.ceil((spec.k_max + 0.5) * spec.H / short))
    rx = int(math.ceil((spec.k_max + 0.5) * spec.W / short))
    ky, kx = np.meshgrid(np.arange(-ry, ry + 1), np.arange(-rx, rx + 1), indexing="ij")
    ky, kx = ky.ravel(), kx.ravel()
    kmag = np.sqrt((ky * short / spec.H) ** 2 + (kx * short / spec.W) ** 2)
    bins = np.floor(kmag + 0.5).astype(np.int64)
    keep = (bins >= spec.k_min) & (bins <= spec.k_max)
    keep &= (np.abs(ky) <= spec.H // 2) & (np.abs(kx) <= spec.W // 2)
    return ky[keep], kx[keep], bins[keep]


def gen_grf(spec: GrfSpec) -> GridField:
    """Zero-mean Gaussian random field whose binned energy follows k^-alpha.

    Every in-band mode draws an independent complex Gaussian; its variance is
    ``k^-alpha / n_modes(k)`` so each integer bin carries expected energy
    ``k^-alpha``. The real part of the inverse transform is the Hermitian
    symmetrization. Each channel is then rescaled to ``amplitude_std``.
    """
    ky, kx, bins = _mode_table(spec)
    counts = np.bincount(bins)
    sigma = np.sqrt(bins.astype(np.float64) ** (-spec.alpha) / counts[bins])
    rng = np.random.default_rng(spec.seed)
    out = np.empty((spec.C, spec.H, spec.W))
    for c in range(spec.C):
        coeff = sigma * (rng.standard_normal(bins.size) + 1j * rng.standard_normal(bins.size))
        grid = np.zeros((spec.H, spec.W), dtype=np.complex128)
        np.add.at(grid, (ky % spec.H, kx % spec.W), coeff)
        f = np.fft.ifft2(grid).real
        f -= f.mean()
        std = f.std()
        out[c] = f * (spec.amplitude_std / std) if std > 0 else f
    return GridField(out.astype(np.float32), spec.dx_km, default_channels(spec.C))


def _check_factor(field: GridField, s: int) -> None:
    if s < 1 or field.H % s or field.W % s:
        raise ValueError(f"factor {s} does not divide grid {field.H}x{field.W}")


def coarsen(hr: GridField, s: int) -> GridField:
    """Bicubic downsampling by an integer factor; dx grows by ``s``."""
    _check_factor(hr, s)
    if s == 1:
        return hr.replace(data=hr.data.copy())
    from fractions import Fraction

    return bicubic_resize(hr, Fraction(1, s))


def bias_field(h: int, w: int, amplitude: float, wavenumber: int) -> np.ndarray:
    """Sinusoid along x with ``wavenumber`` full waves across the width."""
    x = np.arange(w)
    return np.broadcast_to(amplitude * np.sin(2 * np.pi * wavenumber * x / w), (h, w)).copy()


def gen_cross_sim_lr(hr: GridField, s: int, spec: CrossSimSpec) -> GridField:
    """Emulate an LR field from a different simulation: blur, bias, noise, coarsen."""
    _check_factor(hr, s)
    data = hr.data.astype(np.float64)
    if spec.blur_sigma > 0:
        data = np.stack([gaussian_filter(c, spec.blur_sigma, mode="nearest") for c in data])
    if spec.bias_amplitude != 0:
        data = data + bias_field(hr.H, hr.W, spec.bias_amplitude, spec.bias_wavenumber)[None]
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        data = data + spec.noise_std * rng.standard_normal(data.shape)
    return coarsen(hr.replace(data=data.astype(np.float32)), s)


def extract_patches(pair, n: int, hr_patch: int, seed) -> list[tuple[GridField, GridField]]:
    """``n`` aligned LR/HR crops; the HR corner is always ``s`` times the LR corner."""
    lr, hr = pair[0], pair[1]
    s = hr.H // lr.H
    if hr.H != s * lr.H or hr.W != s * lr.W:
        raise ValueError("HR grid is not an integer multiple of the LR grid")
    if hr_patch % s:
        raise ValueError(f"patch size {hr_patch} not divisible by factor {s}")
    if hr_patch > min(hr.H, hr.W):
        raise ValueError(f"patch size {hr_patch} larger than field {hr.H}x{hr.W}")
    p = hr_patch // s
    rng = np.random.default_rng(seed)
    iy = rng.integers(0, lr.H - p + 1, size=n)
    ix = rng.integers(0, lr.W - p + 1, size=n)
    out = []
    for y, x in zip(iy, ix):
        lr_crop = lr.data[:, y : y + p, x : x + p]
        hr_crop = hr.data[:, s * y : s * y + hr_patch, s * x : s * x + hr_patch]
        out.append((lr.replace(data=lr_crop.copy()), hr.replace(data=hr_crop.copy())))
    return out


@dataclass
class DatasetConfig:
    """Desk-scale synthetic dataset: one GRF family, split sizes and factors."""

    grf: GrfSpec = field(default_factory=GrfSpec)
    n_train: int = 64
    n_val: int = 16
    n_test: int = 16
    train_factor: int = 4
    eval_factors: list[int] = field(default_factory=list)
    cross_sim: CrossSimSpec | None = None
    # extra regions as (H, W) grids sharing the GRF statistics
    regions: list[tuple[int, int]] = field(default_factory=list)
    seed: int = 0

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetConfig":
        obj = dict(obj)
        grf = GrfSpec(**obj.pop("grf", {}))
        cross = obj.pop("cross_sim", None)
        regions = [tuple(r) for r in obj.pop("regions", [])]
        return cls(grf=grf, cross_sim=CrossSimSpec(**cross) if cross else None, regions=regions, **obj)

    def to_json(self) -> dict:
        d = asdict(self)
        d["regions"] = [list(r) for r in self.regions]
        return d


def snapshot_seed(base: int, split: str, index: int, region: int) -> int:
    return int(np.random.SeedSequence([base, ("train", "val", "test").index(split), index, region]).generate_state(1)[0])


def make_snapshot(cfg: DatasetConfig, split: str, index: int, region: int, factor: int, shape=None):
    """HR truth and its LR partner; the LR grid is fixed by the training factor.

    Zero-shot truths (``factor`` > train factor) are the same continuous
    field sampled on a finer grid.
    """
    base_h, base_w = shape or (cfg.grf.H, cfg.grf.W)
    lr_h, lr_w = base_h // cfg.train_factor, base_w // cfg.train_factor
    seed = snapshot_seed(cfg.seed, split, index, region)
    grf = GrfSpec(**{**asdict(cfg.grf), "H": lr_h * factor, "W": lr_w * factor, "seed": seed,
                    "dx_km": cfg.grf.dx_km * cfg.train_factor / factor})
    hr = gen_grf(grf)
    if cfg.cross_sim is not None:
        cs = CrossSimSpec(**{**asdict(cfg.cross_sim), "seed": seed + 1})
        lr = gen_cross_sim_lr(hr, factor, cs)
    else:
        lr = coarsen(hr, factor)
    return lr, hr


def build_pairs(cfg: DatasetConfig, split: str, factor: int | None = None):
    factor = cfg.train_factor if factor is None else factor
    n = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}[split]
    shapes = [(cfg.grf.H, cfg.grf.W)] + list(cfg.regions)
    out = []
    for region, shape in enumerate(shapes):
        for i in range(n):
            lr, hr = make_snapshot(cfg, split, i, region, factor, shape)
            out.append((lr, hr, region))
    return out


__all__ = [
    "CrossSimSpec",
    "DatasetConfig",
    "GrfSpec",
    "bias_field",
    "build_pairs",
    "coarsen",
    "extract_patches",
    "gen_cross_sim_lr",
    "gen_grf",
    "make_snapshot",
]
