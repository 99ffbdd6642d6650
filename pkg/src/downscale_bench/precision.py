import os

import numpy as np
import torch

ENV_VAR = "DOWNSCALE_BENCH_PRECISION"


def precision() -> str:
    value = os.environ.get(ENV_VAR, "f32").strip().lower()
    if value not in ("f32", "f64"):
        raise ValueError(f"{ENV_VAR} must be 'f32' or 'f64', got {value!r}")
    return value


def torch_dtype(name: str | None = None) -> torch.dtype:
    return torch.float64 if (name or precision()) == "f64" else torch.float32


def numpy_dtype(name: str | None = None):
    return np.float64 if (name or precision()) == "f64" else np.float32
