"""Resolution-agnostic operator layer stacks and the plugin registry.

An operator stack maps a ``width``-channel field to a ``width``-channel field
on the same grid, takes the grid spacing as an argument, and has parameter
shapes that do not depend on the grid.
"""
from __future__ import annotations

from typing import Callable

import torch
import torch.nn.functional as F
from torch import nn

from .spectral import LocalLayer, SpectralConv2d, fourier_resample

ACTIVATIONS = {"gelu": F.gelu, "relu": F.relu}


class OperatorContractError(ValueError):
    """A registered operator stack is not grid-independent."""


def _activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


class FNOBlocks(nn.Module):
    """``n_blocks`` of act(spectral(x) + W x [+ local(x)])."""

    def __init__(self, width: int, modes: int, n_blocks: int = 4, local_layers: bool = False,
                 activation: str = "gelu"):
        super().__init__()
        self.act = _activation(activation)
        self.spectral = nn.ModuleList(SpectralConv2d(width, width, modes) for _ in range(n_blocks))
        self.pointwise = nn.ModuleList(nn.Conv2d(width, width, 1) for _ in range(n_blocks))
        self.local = nn.ModuleList(LocalLayer(width) for _ in range(n_blocks)) if local_layers else None

    def forward(self, x, grid_spacing: float = 1.0):
        for i, (spec, pw) in enumerate(zip(self.spectral, self.pointwise)):
            y = spec(x) + pw(x)
            if self.local is not None:
                y = y + self.local[i](x, grid_spacing)
            x = self.act(y)
        return x

    def identity_(self, n_signal: int):
        """Signed-pair identity: channels (x, -x) survive act() as act(x) - act(-x) = x."""
        eye = torch.eye(n_signal)
        with torch.no_grad():
            for i, (spec, pw) in enumerate(zip(self.spectral, self.pointwise)):
                spec.zero_()
                pw.weight.zero_()
                pw.bias.zero_()
                w = pw.weight[:, :, 0, 0]
                if i == 0:
                    w[: 2 * n_signal, : 2 * n_signal] = torch.eye(2 * n_signal)
                else:
                    block = torch.cat([torch.cat([eye, -eye], 1), torch.cat([-eye, eye], 1)], 0)
                    w[: 2 * n_signal, : 2 * n_signal] = block
                if self.local is not None:
                    self.local[i].zero_()
        return self


class UNOStage(nn.Module):
    """Spectral + pointwise map onto a new grid (Fourier-resampled)."""

    def __init__(self, cin: int, cout: int, modes: int, local_layers: bool, activation: str):
        super().__init__()
        self.spectral = SpectralConv2d(cin, cout, modes)
        self.pointwise = nn.Conv2d(cin, cout, 1)
        self.local = LocalLayer(cin, cout) if local_layers else None
        self.act = _activation(activation)

    def forward(self, x, out_shape, grid_spacing: float):
        y = self.spectral(x, out_shape, warn=False) + fourier_resample(self.pointwise(x), out_shape)
        if self.local is not None:
            y = y + fourier_resample(self.local(x, grid_spacing), out_shape)
        return self.act(y)


class UNOBlocks(nn.Module):
    """U-shaped stack: two grid-halving stages, bottleneck, two mirrored stages with skips."""

    def __init__(self, width: int, modes: int, n_blocks: int = 1, local_layers: bool = False,
                 activation: str = "gelu"):
        super().__init__()
        w = width
        m2, m4 = max(1, modes // 2), max(1, modes // 4)
        stage = lambda cin, cout, m: UNOStage(cin, cout, m, local_layers, activation)  # noqa: E731
        self.down1 = stage(w, 2 * w, m2)
        self.down2 = stage(2 * w, 4 * w, m4)
        self.bottleneck = nn.ModuleList(stage(4 * w, 4 * w, m4) for _ in range(max(1, n_blocks)))
        self.up1 = stage(8 * w, 2 * w, m2)
        self.up2 = stage(4 * w, w, modes)
        self.out = stage(2 * w, w, modes)

    def forward(self, x, grid_spacing: float = 1.0):
        h, w = x.shape[-2:]
        s1 = (max(1, (h + 1) // 2), max(1, (w + 1) // 2))
        s2 = (max(1, (s1[0] + 1) // 2), max(1, (s1[1] + 1) // 2))
        e1 = self.down1(x, s1, grid_spacing)
        e2 = self.down2(e1, s2, 2 * grid_spacing)
        b = e2
        for layer in self.bottleneck:
            b = layer(b, s2, 4 * grid_spacing)
        d1 = self.up1(torch.cat([b, e2], 1), s1, 4 * grid_spacing)
        d2 = self.up2(torch.cat([d1, e1], 1), (h, w), 2 * grid_spacing)
        return self.out(torch.cat([d2, x], 1), (h, w), grid_spacing)


class IdentityOperator(nn.Module):
    def forward(self, x, grid_spacing: float = 1.0):
        return x


OperatorFactory = Callable[..., nn.Module]

_REGISTRY: dict[str, OperatorFactory] = {}


def _param_signature(module: nn.Module):
    return [(n, tuple(p.shape)) for n, p in module.named_parameters()]


def check_operator_contract(factory: OperatorFactory, width: int = 4, modes: int = 2) -> None:
    """Probe a factory at two grids; parameters must be reused and the grid preserved."""
    try:
        layer = factory(width=width, modes=modes, n_blocks=1, local_layers=False, activation="gelu")
    except Exception as exc:  # noqa: BLE001
        raise OperatorContractError(f"factory failed to build a probe layer: {exc}") from exc
    before = _param_signature(layer)
    for shape in ((8, 8), (12, 20)):
        x = torch.randn(1, width, *shape)
        try:
            y = layer(x, grid_spacing=1.0)
        except Exception as exc:  # noqa: BLE001
            raise OperatorContractError(f"operator failed on a {shape} grid: {exc}") from exc
        if tuple(y.shape) != tuple(x.shape):
            raise OperatorContractError(f"operator mapped {tuple(x.shape)} to {tuple(y.shape)}")
        if _param_signature(layer) != before:
            raise OperatorContractError("operator parameters changed with the grid")


def register_operator(name: str, factory: OperatorFactory, overwrite: bool = False) -> None:
    """Register an operator stack usable as ``ModelSpec(family='plugin', operator=name)``.

    ``factory(width=, modes=, n_blocks=, local_layers=, activation=)`` must return a
    module called as ``layer(x, grid_spacing=h)``.
    """
    if name in _REGISTRY and not overwrite:
        raise ValueError(f"operator {name!r} already registered")
    check_operator_contract(factory)
    _REGISTRY[name] = factory


def get_operator(name: str) -> OperatorFactory:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"no operator registered as {name!r}; known: {sorted(_REGISTRY)}") from None


def registered_operators() -> list[str]:
    return sorted(_REGISTRY)


register_operator("fno", FNOBlocks)
register_operator("uno", UNOBlocks)
register_operator("identity", lambda **kw: IdentityOperator())
