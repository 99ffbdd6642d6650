"""Model specifications, the model families and their builders."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .. import io
from ..precision import torch_dtype
from ..regrid import bicubic_array
from .blocks import PassThrough, RRDBExtractor, RSTBExtractor, SubPixelUpsampler, shuffle_factors
from .operators import FNOBlocks, UNOBlocks, _activation, get_operator

OPERATOR_FAMILIES = ("fno", "dfno", "duno_lite", "plugin")
BASELINE_FAMILIES = ("srcnn", "edsr_lite", "swinir_lite", "esrgan_lite")
FAMILIES = ("bicubic",) + BASELINE_FAMILIES + OPERATOR_FAMILIES
EXTRACTORS = ("rrdb", "rstb", "none")
EXTRACTOR_SWEEP = (6, 12, 24)

_DEFAULT_BLOCKS = {"fno": 4, "dfno": 4, "plugin": 4, "duno_lite": 1, "edsr_lite": 8, "swinir_lite": 4}


class ResolutionContractError(ValueError):
    """A fixed-factor model was asked for a factor it was not built for."""


@dataclass
class ModelSpec:
    family: str
    in_channels: int = 2
    width: int = 64
    n_blocks: int | None = None
    modes: int = 12
    extractor: str = "rrdb"
    n_extractor_blocks: int = 6
    local_layers: bool = False
    train_factor: int = 4
    activation: str = "gelu"
    operator: str | None = None
    extractor_width: int | None = None
    growth: int = 32
    swin_depth: int = 4
    swin_heads: int = 4
    window: int = 8
    mlp_ratio: float = 2.0
    fno_interp_after: bool = False
    global_skip: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.train_factor < 2:
            raise ValueError(f"train_factor must be >= 2, got {self.train_factor}")
        if self.in_channels < 1 or self.width < 1 or self.modes < 1:
            raise ValueError("in_channels, width and modes must be positive")
        if self.extractor not in EXTRACTORS:
            raise ValueError(f"unknown extractor {self.extractor!r}; choose from {EXTRACTORS}")
        if self.n_extractor_blocks < 1:
            raise ValueError("n_extractor_blocks must be positive")
        _activation(self.activation)
        if self.n_blocks is None:
            self.n_blocks = _DEFAULT_BLOCKS.get(self.family, 0)
        if self.extractor_width is None:
            self.extractor_width = self.width
        if self.family == "plugin" and not self.operator:
            raise ValueError("family 'plugin' needs an operator name")
        if self.family in ("swinir_lite",) or (self.family in ("dfno", "duno_lite", "plugin") and self.extractor == "rstb"):
            if self.extractor_width % self.swin_heads:
                raise ValueError("extractor width must be divisible by swin_heads")
        if self.family in ("edsr_lite", "swinir_lite", "esrgan_lite"):
            shuffle_factors(self.train_factor)

    @property
    def is_operator(self) -> bool:
        return self.family in OPERATOR_FAMILIES

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown model spec fields: {sorted(unknown)}")
        return cls(**obj)


def _bicubic(x: torch.Tensor, s: int) -> torch.Tensor:
    return bicubic_array(x, s)


class Downscaler(nn.Module):
    """Base class: ``forward(x_lr, factor)`` maps (B, C, h, w) to (B, C, s*h, s*w)."""

    resolution_flexible = False

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec

    def _factor(self, factor):
        s = self.spec.train_factor if factor is None else int(factor)
        if not self.resolution_flexible and s != self.spec.train_factor:
            raise ResolutionContractError(
                f"{self.spec.family} upsamples by exactly {self.spec.train_factor}, got {s}; "
                "use post_model placement for other factors"
            )
        if s < 2:
            raise ValueError(f"upsampling factor must be >= 2, got {s}")
        return s


class BicubicModel(Downscaler):
    resolution_flexible = True

    def forward(self, x, factor=None):
        return _bicubic(x, self._factor(factor))


class OperatorHead(nn.Module):
    """Lifting, a grid-independent operator stack, two-layer projection."""

    def __init__(self, in_channels: int, out_channels: int, width: int, operator: nn.Module,
                 activation: str = "gelu"):
        super().__init__()
        self.lift = nn.Conv2d(in_channels, width, 1)
        self.operator = operator
        self.proj1 = nn.Conv2d(width, 2 * width, 1)
        self.proj2 = nn.Conv2d(2 * width, out_channels, 1)
        self.act = _activation(activation)

    def forward(self, x, grid_spacing: float = 1.0):
        y = self.operator(self.lift(x), grid_spacing=grid_spacing)
        return self.proj2(self.act(self.proj1(y)))

    def identity_(self):
        """Make the head an exact identity; needs an operator with ``identity_`` and width >= 2C."""
        c, width = self.lift.in_channels, self.lift.out_channels
        if 2 * c > width:
            raise ValueError(f"identity initialisation needs width >= {2 * c}")
        if not hasattr(self.operator, "identity_"):
            raise TypeError(f"{type(self.operator).__name__} has no identity initialisation")
        eye = torch.eye(c)
        with torch.no_grad():
            for conv in (self.lift, self.proj1, self.proj2):
                conv.weight.zero_()
                conv.bias.zero_()
            self.lift.weight[:c, :, 0, 0] = eye
            self.lift.weight[c : 2 * c, :, 0, 0] = -eye
            diff = torch.cat([eye, -eye], 1)
            self.proj1.weight[:c, : 2 * c, 0, 0] = diff
            self.proj1.weight[c : 2 * c, : 2 * c, 0, 0] = -diff
            self.proj2.weight[:, : 2 * c, 0, 0] = diff
        self.operator.identity_(c)
        return self


def _operator_stack(spec: ModelSpec) -> nn.Module:
    kw = dict(width=spec.width, modes=spec.modes, n_blocks=spec.n_blocks,
              local_layers=spec.local_layers, activation=spec.activation)
    if spec.family in ("fno", "dfno"):
        return FNOBlocks(**kw)
    if spec.family == "duno_lite":
        return UNOBlocks(**kw)
    return get_operator(spec.operator)(**kw)


class FNOModel(Downscaler):
    """Bicubic to the target grid, then operator layers (or the reverse, for the ablation)."""

    resolution_flexible = True

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        c = spec.in_channels
        self.head = OperatorHead(c, c, spec.width, _operator_stack(spec), spec.activation)

    def forward(self, x, factor=None):
        s = self._factor(factor)
        if self.spec.fno_interp_after:
            out = _bicubic(self.head(x, grid_spacing=1.0), s)
        else:
            out = self.head(_bicubic(x, s), grid_spacing=1.0 / s)
        return out + _bicubic(x, s) if self.spec.global_skip else out

    def identity_(self):
        self.head.identity_()
        return self


class DXNOModel(Downscaler):
    """LR feature extractor, bicubic embedding interpolation, operator layers, projection."""

    resolution_flexible = True

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        c, ew = spec.in_channels, spec.extractor_width
        if spec.extractor == "rrdb":
            self.extractor = RRDBExtractor(c, ew, spec.n_extractor_blocks, spec.growth)
        elif spec.extractor == "rstb":
            self.extractor = RSTBExtractor(c, ew, spec.n_extractor_blocks, spec.swin_depth,
                                           spec.swin_heads, spec.window, spec.mlp_ratio)
        else:
            self.extractor = PassThrough(c)
        self.head = OperatorHead(self.extractor.out_channels, c, spec.width, _operator_stack(spec),
                                 spec.activation)

    def forward(self, x, factor=None):
        s = self._factor(factor)
        up = _bicubic(self.extractor(x), s)
        out = self.head(up, grid_spacing=1.0 / s)
        if self.spec.global_skip:
            out = out + _bicubic(x, s)
        return out

    def identity_(self):
        self.head.identity_()
        return self


class SRCNN(Downscaler):
    """Bicubic upsampling followed by a 9-5-5 convolutional correction."""

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        c = spec.in_channels
        self.conv1 = nn.Conv2d(c, 64, 9, padding=4, padding_mode="replicate")
        self.conv2 = nn.Conv2d(64, 32, 5, padding=2, padding_mode="replicate")
        self.conv3 = nn.Conv2d(32, c, 5, padding=2, padding_mode="replicate")

    def forward(self, x, factor=None):
        up = _bicubic(x, self._factor(factor))
        return up + self.conv3(F.relu(self.conv2(F.relu(self.conv1(up)))))


class ResBlock(nn.Module):
    def __init__(self, channels: int, scale: float = 0.1):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.scale = scale

    def forward(self, x):
        return x + self.scale * self.conv2(F.relu(self.conv1(x)))


class EDSRLite(Downscaler):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        c, w = spec.in_channels, spec.width
        self.stem = nn.Conv2d(c, w, 3, padding=1)
        self.body = nn.Sequential(*(ResBlock(w) for _ in range(spec.n_blocks)), nn.Conv2d(w, w, 3, padding=1))
        self.upsample = SubPixelUpsampler(w, spec.train_factor)
        self.out = nn.Conv2d(w, c, 3, padding=1)

    def forward(self, x, factor=None):
        self._factor(factor)
        fea = self.stem(x)
        return self.out(self.upsample(fea + self.body(fea)))


class SwinIRLite(Downscaler):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        c, w = spec.in_channels, spec.width
        self.features = RSTBExtractor(c, w, spec.n_blocks, spec.swin_depth, spec.swin_heads,
                                      spec.window, spec.mlp_ratio)
        self.upsample = SubPixelUpsampler(w, spec.train_factor)
        self.out = nn.Conv2d(w, c, 3, padding=1)

    def forward(self, x, factor=None):
        self._factor(factor)
        return self.out(self.upsample(self.features(x)))


class ESRGANLite(Downscaler):
    """RRDB generator with a sub-pixel upsampler."""

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        c, w = spec.in_channels, spec.width
        self.features = RRDBExtractor(c, w, spec.n_extractor_blocks, spec.growth)
        self.upsample = SubPixelUpsampler(w, spec.train_factor)
        self.conv_hr = nn.Conv2d(w, w, 3, padding=1)
        self.conv_last = nn.Conv2d(w, c, 3, padding=1)

    def forward(self, x, factor=None):
        self._factor(factor)
        y = self.upsample(self.features(x))
        return self.conv_last(F.leaky_relu(self.conv_hr(y), 0.2))


_BUILDERS = {
    "bicubic": BicubicModel,
    "srcnn": SRCNN,
    "edsr_lite": EDSRLite,
    "swinir_lite": SwinIRLite,
    "esrgan_lite": ESRGANLite,
    "fno": FNOModel,
    "dfno": DXNOModel,
    "duno_lite": DXNOModel,
    "plugin": DXNOModel,
}


def build_model(spec: ModelSpec, seed: int | None = None, dtype: torch.dtype | None = None) -> Downscaler:
    """Instantiate ``spec``; ``seed`` fixes the initial parameters."""
    if seed is not None:
        torch.manual_seed(seed)
    model = _BUILDERS[spec.family](spec)
    return model.to(dtype or torch_dtype())


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def param_count(spec: ModelSpec) -> int:
    """Learnable real scalars; complex spectral weights are stored as real pairs."""
    return count_parameters(_BUILDERS[spec.family](spec))


def save_checkpoint(path, model: Downscaler, **meta) -> None:
    dtype = "f64le" if next(iter(model.state_dict().values()), torch.zeros(0)).dtype == torch.float64 else "f32le"
    params = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    io.write_checkpoint(path, {"model_spec": model.spec.to_json(), **meta}, params, dtype=dtype)


def load_checkpoint(path, dtype: torch.dtype | None = None) -> tuple[Downscaler, dict]:
    meta, params = io.read_checkpoint(path)
    spec = ModelSpec.from_json(meta["model_spec"])
    model = build_model(spec, dtype=dtype)
    state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in params.items()}
    model.load_state_dict(state)
    return model.to(dtype or torch_dtype()), meta


# --- pipeline wiring --------------------------------------------------------

PLACEMENTS = ("pre_operator", "post_model")


@dataclass
class PipelineSpec:
    """Where interpolation to the target grid happens, and the two factors."""

    placement: str = "pre_operator"
    train_factor: int = 4
    eval_factor: int = 4

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.train_factor < 2:
            raise ValueError("train_factor must be >= 2")
        if self.eval_factor < self.train_factor:
            raise ValueError(f"eval_factor {self.eval_factor} < train_factor {self.train_factor}")
        if self.placement == "post_model" and self.eval_factor % self.train_factor:
            raise ValueError(
                f"post_model placement needs eval_factor divisible by train_factor, "
                f"got {self.eval_factor} and {self.train_factor}"
            )

    @property
    def zero_shot(self) -> bool:
        return self.eval_factor > self.train_factor

    def to_json(self) -> dict:
        return asdict(self)


def default_placement(family: str) -> str:
    return "post_model" if family in BASELINE_FAMILIES else "pre_operator"


def resolve_wiring(family: str, placement: str) -> str:
    """Name of the evaluation path a family takes under ``placement``.

    ``operator_rescale``: the model itself rescales to the evaluation factor.
    ``upsample_then_bicubic``: model at its training factor, bicubic for the rest.
    ``bicubic_direct``: plain interpolation.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown placement {placement!r}")
    if family == "bicubic":
        return "bicubic_direct"
    if placement == "pre_operator":
        if family in BASELINE_FAMILIES:
            raise ResolutionContractError(
                f"{family} has a fixed learned upsampler; it only supports post_model placement"
            )
        return "operator_rescale"
    return "upsample_then_bicubic"


def run_pipeline(model: Downscaler, x: torch.Tensor, pipeline: PipelineSpec) -> torch.Tensor:
    """Apply ``model`` to normalized LR input and return the field at the evaluation factor."""
    wiring = resolve_wiring(model.spec.family, pipeline.placement)
    if wiring == "upsample_then_bicubic":
        y = model(x, pipeline.train_factor)
        rest = pipeline.eval_factor // pipeline.train_factor
        return y if rest == 1 else _bicubic(y, rest)
    return model(x, pipeline.eval_factor)


def downscale_fields(model: Downscaler, lr_fields, pipeline: PipelineSpec, stats: io.NormStats | None = None,
                     batch_size: int = 16) -> list[io.GridField]:
    """Downscale physical-unit LR fields; normalization is applied around the model."""
    dtype = next(model.parameters(), torch.zeros((), dtype=torch_dtype())).dtype
    out: list[io.GridField | None] = [None] * len(lr_fields)
    groups: dict[tuple, list[int]] = {}
    for i, f in enumerate(lr_fields):
        groups.setdefault(f.shape, []).append(i)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for idx in groups.values():
            for start in range(0, len(idx), batch_size):
                chunk = idx[start : start + batch_size]
                fields_ = [io.normalize(lr_fields[i], stats) if stats else lr_fields[i] for i in chunk]
                x = torch.as_tensor(np.stack([f.data for f in fields_]), dtype=dtype)
                y = run_pipeline(model, x, pipeline).double().numpy()
                for i, arr in zip(chunk, y):
                    src = lr_fields[i]
                    g = io.GridField(arr, src.dx_km / pipeline.eval_factor, list(src.channels))
                    out[i] = io.denormalize(g, stats) if stats else g
    model.train(was_training)
    return out
