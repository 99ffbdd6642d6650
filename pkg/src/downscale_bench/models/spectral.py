"""Spectral convolution, Fourier resampling and the localized kernel layer."""
from __future__ import annotations

import math
import warnings

import torch
import torch.nn.functional as F
from torch import nn


class ModeClipWarning(UserWarning):
    """A spectral layer was applied to a grid too small for its mode count."""


class NonFiniteInputError(ValueError):
    """A layer received NaN or infinite values."""


def _row_split(my: int, h: int) -> tuple[int, int]:
    """Rows kept at non-negative (ky = 0..top-1) and negative (ky = -bottom..-1) frequencies."""
    top = min(my, h // 2 + 1)
    bottom = min(my, h - top)
    return top, bottom


def spectral_mix(x_ft: torch.Tensor, w_top: torch.Tensor, w_bot: torch.Tensor, out_shape, warn=True):
    """Channel-mix the retained modes of a half spectrum into an ``out_shape`` half spectrum.

    ``x_ft``: (B, Cin, H, W//2+1) complex. ``w_top``/``w_bot``: (Cin, Cout, my, mx) complex,
    for ky >= 0 and ky < 0 respectively. Modes are clipped to the smaller of the input and
    output bands.
    """
    h_in, h_out, w_out = x_ft.shape[-2], out_shape[0], out_shape[1]
    h_min = min(h_in, h_out)
    by, bx = h_min // 2 + 1, min(x_ft.shape[-1], w_out // 2 + 1)
    my, mx = w_top.shape[-2], w_top.shape[-1]
    if warn and (my > by or mx > bx):
        warnings.warn(
            f"modes ({my}, {mx}) exceed the band ({by}, {bx}) of a {h_in}-row grid; clipping",
            ModeClipWarning,
            stacklevel=3,
        )
    my, mx = min(my, by), min(mx, bx)
    top, bottom = _row_split(my, h_min)
    b, cout = x_ft.shape[0], w_top.shape[1]
    out = torch.zeros(b, cout, h_out, w_out // 2 + 1, dtype=x_ft.dtype, device=x_ft.device)
    out[:, :, :top, :mx] = torch.einsum("bixy,ioxy->boxy", x_ft[:, :, :top, :mx], w_top[:, :, :top, :mx])
    if bottom:
        nb = w_bot.shape[-2]
        out[:, :, h_out - bottom :, :mx] = torch.einsum(
            "bixy,ioxy->boxy", x_ft[:, :, h_in - bottom :, :mx], w_bot[:, :, nb - bottom :, :mx]
        )
    return out


def spectral_conv2d(x: torch.Tensor, w_top: torch.Tensor, w_bot: torch.Tensor, out_shape=None, warn=True):
    """Fourier-domain channel mixing with mode truncation.

    Real-to-complex transform, keep ``my`` rows of non-negative and ``my`` rows of
    negative y-frequency for the first ``mx`` x-frequencies of the half spectrum,
    multiply by the complex weights, zero everything else, inverse transform.
    With ``out_shape`` the inverse transform is taken on a different grid and the
    result rescaled so function values (not coefficients) are preserved.
    """
    if not torch.isfinite(x).all():
        raise NonFiniteInputError("spectral_conv2d received non-finite input")
    h, w = x.shape[-2:]
    out_shape = (h, w) if out_shape is None else tuple(out_shape)
    x_ft = torch.fft.rfft2(x)
    out_ft = spectral_mix(x_ft, w_top, w_bot, out_shape, warn)
    y = torch.fft.irfft2(out_ft, s=out_shape)
    if out_shape != (h, w):
        y = y * (out_shape[0] * out_shape[1]) / (h * w)
    return y


def fourier_resample(x: torch.Tensor, out_shape) -> torch.Tensor:
    """Band-limited resampling: truncate or zero-pad the spectrum to ``out_shape``."""
    h, w = x.shape[-2:]
    out_shape = tuple(out_shape)
    if out_shape == (h, w):
        return x
    x_ft = torch.fft.rfft2(x)
    ho, wo = out_shape
    mx = min(x_ft.shape[-1], wo // 2 + 1)
    # strict Nyquist rows/cols are dropped so the result stays real-consistent
    top = min((h + 1) // 2, (ho + 1) // 2)
    bottom = min((h - 1) // 2, (ho - 1) // 2)
    mx = min(mx, (w + 1) // 2, (wo + 1) // 2)
    out = torch.zeros(*x.shape[:-2], ho, wo // 2 + 1, dtype=x_ft.dtype, device=x.device)
    out[..., :top, :mx] = x_ft[..., :top, :mx]
    if bottom:
        out[..., ho - bottom :, :mx] = x_ft[..., h - bottom :, :mx]
    return torch.fft.irfft2(out, s=out_shape) * (ho * wo) / (h * w)


class SpectralConv2d(nn.Module):
    """Learned spectral convolution; weights stored as real (..., 2) pairs."""

    def __init__(self, in_channels: int, out_channels: int, modes_y: int, modes_x: int | None = None):
        super().__init__()
        modes_x = modes_y if modes_x is None else modes_x
        if modes_y < 1 or modes_x < 1:
            raise ValueError("modes must be >= 1")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.modes_y, self.modes_x = modes_y, modes_x
        scale = 1.0 / (in_channels * out_channels)
        shape = (in_channels, out_channels, modes_y, modes_x, 2)
        self.weight_top = nn.Parameter(scale * torch.rand(shape))
        self.weight_bottom = nn.Parameter(scale * torch.rand(shape))

    def complex_weights(self):
        return torch.view_as_complex(self.weight_top), torch.view_as_complex(self.weight_bottom)

    def forward(self, x, out_shape=None, warn=True):
        w_top, w_bot = self.complex_weights()
        return spectral_conv2d(x, w_top, w_bot, out_shape, warn)

    def zero_(self):
        with torch.no_grad():
            self.weight_top.zero_()
            self.weight_bottom.zero_()
        return self

    def extra_repr(self):
        return f"{self.in_channels}, {self.out_channels}, modes=({self.modes_y}, {self.modes_x})"


class LocalLayer(nn.Module):
    """Localized differential and integral kernels added beside a spectral branch.

    The 3x3 differential stencil is projected to zero sum and divided by the
    grid spacing; the 5x5 integral kernel is multiplied by spacing squared.
    """

    def __init__(self, in_channels: int, out_channels: int | None = None):
        super().__init__()
        out_channels = in_channels if out_channels is None else out_channels
        bound = 1.0 / math.sqrt(9 * in_channels)
        self.stencil = nn.Parameter(torch.empty(out_channels, in_channels, 3, 3).uniform_(-bound, bound))
        self.kernel = nn.Parameter(torch.empty(out_channels, in_channels, 5, 5).uniform_(-bound, bound))

    def zero_sum_stencil(self):
        return self.stencil - self.stencil.mean(dim=(-2, -1), keepdim=True)

    def differential(self, x, grid_spacing: float):
        xp = F.pad(x, (1, 1, 1, 1), mode="replicate")
        return F.conv2d(xp, self.zero_sum_stencil()) / grid_spacing

    def integral(self, x, grid_spacing: float):
        xp = F.pad(x, (2, 2, 2, 2), mode="replicate")
        return F.conv2d(xp, self.kernel) * grid_spacing**2

    def forward(self, x, grid_spacing: float = 1.0):
        return self.differential(x, grid_spacing) + self.integral(x, grid_spacing)

    def init_central_difference(self, axis: str = "x"):
        """Per-channel central difference along ``axis``; integral kernel zeroed."""
        with torch.no_grad():
            self.stencil.zero_()
            self.kernel.zero_()
            for c in range(min(self.stencil.shape[0], self.stencil.shape[1])):
                if axis == "x":
                    self.stencil[c, c, 1, 0], self.stencil[c, c, 1, 2] = -0.5, 0.5
                else:
                    self.stencil[c, c, 0, 1], self.stencil[c, c, 2, 1] = -0.5, 0.5
        return self

    def zero_(self):
        with torch.no_grad():
            self.stencil.zero_()
            self.kernel.zero_()
        return self


def local_layer(x, grid_spacing: float, layer: LocalLayer | None = None):
    layer = LocalLayer(x.shape[1]) if layer is None else layer
    return layer(x, grid_spacing)
