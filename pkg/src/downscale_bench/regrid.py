"""Bicubic resampling and inverse-distance-weighted regridding.

Bicubic convention (fixed so results are comparable across implementations):
Keys cubic convolution with ``a = -0.5``, half-pixel centres (output pixel
``i`` samples input coordinate ``(i + 0.5) / scale - 0.5``), edge-replicate
padding, channels resampled independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .io import GridField

KEYS_A = -0.5
COINCIDENT_DISTANCE = 1e-9


def keys_kernel(t, a: float = KEYS_A):
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def as_scale(scale) -> Fraction:
    if isinstance(scale, float):
        frac = Fraction(scale).limit_denominator(10_000)
    else:
        frac = Fraction(scale)
    if frac <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return frac


def output_size(n: int, scale) -> int:
    # round-half-up, so 53 * 15/4 style products are unambiguous
    return int(math.floor(n * as_scale(scale) + Fraction(1, 2)))


@lru_cache(maxsize=256)
def _weights(n_in: int, scale: Fraction) -> np.ndarray:
    n_out = output_size(n_in, scale)
    if n_out < 1:
        raise ValueError(f"scale {scale} maps {n_in} pixels to nothing")
    inv = 1.0 / float(scale)
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        x = (i + 0.5) * inv - 0.5
        x0 = math.floor(x)
        taps = np.arange(x0 - 1, x0 + 3)
        w = keys_kernel(x - taps)
        np.add.at(m[i], np.clip(taps, 0, n_in - 1), w)
    m.setflags(write=False)
    return m


def resize_matrix(n_in: int, scale) -> np.ndarray:
    """(n_out, n_in) matrix applying the 1-D bicubic resampling along one axis."""
    return _weights(n_in, as_scale(scale))


def bicubic_array(x, scale):
    """Resample the last two axes of a numpy array or torch tensor by ``scale``."""
    h, w = x.shape[-2], x.shape[-1]
    my, mx = resize_matrix(h, scale), resize_matrix(w, scale)
    if isinstance(x, np.ndarray):
        out = np.einsum("ih,...hw,jw->...ij", my, x.astype(np.float64, copy=False), mx, optimize=True)
        return out
    import torch

    ty = torch.tensor(my, dtype=x.dtype, device=x.device)
    tx = torch.tensor(mx, dtype=x.dtype, device=x.device)
    return torch.matmul(torch.matmul(ty, x), tx.transpose(0, 1))


def bicubic_resize(field: GridField, scale) -> GridField:
    frac = as_scale(scale)
    out = bicubic_array(field.data, frac).astype(np.float32)
    return field.replace(data=out, dx_km=field.dx_km / float(frac))


@dataclass
class IdwSpec:
    src_coords: np.ndarray
    dst_coords: np.ndarray
    k_neighbors: int = 4
    power: float = 2.0

    def __post_init__(self):
        self.src_coords = np.atleast_2d(np.asarray(self.src_coords, dtype=np.float64))
        self.dst_coords = np.atleast_2d(np.asarray(self.dst_coords, dtype=np.float64))
        if self.src_coords.shape[0] == 0 or self.src_coords.size == 0:
            raise ValueError("IDW needs at least one source point")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.k_neighbors > self.src_coords.shape[0]:
            raise ValueError(
                f"k_neighbors={self.k_neighbors} exceeds {self.src_coords.shape[0]} sources"
            )
        if not self.power > 0:
            raise ValueError("power must be positive")


def idw_regrid(values, spec: IdwSpec) -> np.ndarray:
    """Inverse-distance weighting over the ``k_neighbors`` nearest sources.

    A destination closer than 1e-9 to a source returns that source value
    exactly. Distances are Euclidean in the supplied coordinates.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != spec.src_coords.shape[0]:
        raise ValueError("one value per source point is required")
    tree = cKDTree(spec.src_coords)
    dist, idx = tree.query(spec.dst_coords, k=spec.k_neighbors)
    dist = dist.reshape(len(spec.dst_coords), -1)
    idx = idx.reshape(len(spec.dst_coords), -1)
    near = values[idx]
    hit = dist[:, 0] < COINCIDENT_DISTANCE
    with np.errstate(divide="ignore"):
        w = np.where(dist < COINCIDENT_DISTANCE, 0.0, dist ** (-spec.power))
    # trailing value axes (e.g. channels) broadcast against the weights
    wb = w.reshape(w.shape + (1,) * (near.ndim - 2))
    norm = np.where(hit, 1.0, w.sum(axis=1)).reshape((-1,) + (1,) * (near.ndim - 2))
    out = (wb * near).sum(axis=1) / norm
    out[hit] = near[hit, 0]
    return out


def grid_coords(h: int, w: int, dy: float, dx: float, y0: float = 0.0, x0: float = 0.0) -> np.ndarray:
    """Cell-centre coordinates (y, x) of an h x w grid, row-major."""
    yy, xx = np.meshgrid(y0 + (np.arange(h) + 0.5) * dy, x0 + (np.arange(w) + 0.5) * dx, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


def idw_regrid_field(field: GridField, dst_shape: tuple[int, int], dst_dx_km: float, k_neighbors=4, power=2.0) -> GridField:
    """Regrid a field onto another regular grid covering the same origin."""
    src = grid_coords(field.H, field.W, field.dx_km, field.dx_km)
    dst = grid_coords(dst_shape[0], dst_shape[1], dst_dx_km, dst_dx_km)
    spec = IdwSpec(src, dst, k_neighbors, power)
    out = np.stack([idw_regrid(c.ravel(), spec).reshape(dst_shape) for c in field.data])
    return GridField(out.astype(np.float32), dst_dx_km, list(field.channels))
