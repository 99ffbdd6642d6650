"""Snapshot, dataset, statistics and checkpoint persistence.

Snapshot files (format v1) are a little-endian ``uint32`` header length,
a UTF-8 JSON header, then ``C*H*W`` little-endian float32 values in
channel-major, row-major order.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1
SNAPSHOT_DTYPE = "f32le"
STD_FLOOR = 1e-8
SPLITS = ("train", "val", "test")


class SnapshotFormatError(ValueError):
    """Raised when a snapshot or checkpoint file is malformed."""


class GridValidationError(ValueError):
    """Raised when a field violates the GridField invariants."""


@dataclass(frozen=True)
class Channel:
    name: str
    unit: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "unit": self.unit}

    @classmethod
    def from_json(cls, obj) -> "Channel":
        if isinstance(obj, str):
            return cls(obj)
        return cls(str(obj["name"]), str(obj.get("unit", "")))


def default_channels(n: int) -> list[Channel]:
    if n == 2:
        return [Channel("u", "m/s"), Channel("v", "m/s")]
    return [Channel(f"c{i}") for i in range(n)]


@dataclass
class GridField:
    """One gridded snapshot: ``data`` is C x H x W float32."""

    data: np.ndarray
    dx_km: float = 1.0
    channels: list[Channel] = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if not self.channels:
            self.channels = default_channels(self.data.shape[0])
        self.channels = [c if isinstance(c, Channel) else Channel.from_json(c) for c in self.channels]
        self.validate()

    def validate(self) -> None:
        if self.data.ndim != 3:
            raise GridValidationError(f"expected C x H x W data, got shape {self.data.shape}")
        c, h, w = self.data.shape
        if h < 4 or w < 4:
            raise GridValidationError(f"grid must be at least 4 x 4, got {h} x {w}")
        if len(self.channels) != c:
            raise GridValidationError(f"{len(self.channels)} channel records for {c} channels")
        if not (self.dx_km > 0 and math.isfinite(self.dx_km)):
            raise GridValidationError(f"dx_km must be positive, got {self.dx_km}")
        if not np.all(np.isfinite(self.data)):
            raise GridValidationError("field contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def C(self) -> int:
        return self.data.shape[0]

    @property
    def H(self) -> int:
        return self.data.shape[1]

    @property
    def W(self) -> int:
        return self.data.shape[2]

    def replace(self, data=None, dx_km=None) -> "GridField":
        return GridField(
            self.data if data is None else data,
            self.dx_km if dx_km is None else dx_km,
            list(self.channels),
        )


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have one entry per channel")
        if np.any(self.std <= 0):
            raise ValueError("std must be positive for every channel")

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "NormStats":
        return cls(obj["mean"], obj["std"])


@dataclass
class Pair:
    lr: GridField
    hr: GridField
    region_id: int = 0


@dataclass
class PairedDataset:
    pairs: list[Pair]
    split: str = "train"
    stats: NormStats | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        self.pairs = [p if isinstance(p, Pair) else Pair(*p) for p in self.pairs]
        factors = set()
        names = None
        for p in self.pairs:
            factors.add(_pair_factor(p.lr, p.hr))
            chans = [c.name for c in p.lr.channels] + ["|"] + [c.name for c in p.hr.channels]
            if names is None:
                names = chans
            elif chans != names:
                raise ValueError("channel lists differ across the dataset")
        if len(factors) > 1:
            raise ValueError(f"pairs use different upsampling factors: {sorted(factors)}")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def factor(self) -> int:
        if not self.pairs:
            raise ValueError("empty dataset has no factor")
        p = self.pairs[0]
        return _pair_factor(p.lr, p.hr)

    @property
    def region_ids(self) -> list[int]:
        return sorted({p.region_id for p in self.pairs})


def _pair_factor(lr: GridField, hr: GridField) -> int:
    s = hr.H // lr.H
    if s < 1 or hr.H != s * lr.H or hr.W != s * lr.W:
        raise ValueError(f"HR {hr.H}x{hr.W} is not an integer multiple of LR {lr.H}x{lr.W}")
    return s


# --- snapshots -------------------------------------------------------------

def _write_framed(path: Path, header: dict, payload: bytes) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def _read_framed(path: Path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise SnapshotFormatError(f"{path}: file too short for a header")
    (n,) = struct.unpack("<I", raw[:4])
    if 4 + n > len(raw):
        raise SnapshotFormatError(f"{path}: header length {n} exceeds file size")
    try:
        header = json.loads(raw[4 : 4 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise SnapshotFormatError(f"{path}: header must be a JSON object")
    return header, raw[4 + n :]


def write_snapshot(field: GridField, path) -> None:
    data = np.asarray(field.data)
    if not np.all(np.isfinite(data)):
        raise GridValidationError("refusing to write non-finite values")
    c, h, w = data.shape
    header = {
        "version": FORMAT_VERSION,
        "C": c,
        "H": h,
        "W": w,
        "dx_km": float(field.dx_km),
        "channels": [ch.to_json() for ch in field.channels],
        "dtype": SNAPSHOT_DTYPE,
    }
    _write_framed(Path(path), header, data.astype("<f4", copy=False).tobytes(order="C"))


def read_snapshot(path) -> GridField:
    header, payload = _read_framed(Path(path))
    try:
        version = header["version"]
        c, h, w = int(header["C"]), int(header["H"]), int(header["W"])
        dx = float(header["dx_km"])
        channels = [Channel.from_json(x) for x in header["channels"]]
        dtype = header["dtype"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotFormatError(f"{path}: malformed header: {exc}") from exc
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    if dtype != SNAPSHOT_DTYPE:
        raise SnapshotFormatError(f"{path}: unsupported dtype {dtype!r}")
    if len(channels) != c:
        raise SnapshotFormatError(f"{path}: header lists {len(channels)} channels but C={c}")
    if c < 1 or h < 0 or w < 0 or len(payload) != 4 * c * h * w:
        raise SnapshotFormatError(
            f"{path}: payload size mismatch ({len(payload)} bytes for {c}x{h}x{w})"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(c, h, w)
    return GridField(data, dx, channels)


# --- normalization ---------------------------------------------------------

def compute_norm_stats(train_fields: Sequence[GridField]) -> NormStats:
    """Per-channel mean and population std over every pixel of every field."""
    fields = list(train_fields)
    if not fields:
        raise ValueError("cannot compute statistics of an empty field list")
    names = [c.name for c in fields[0].channels]
    for f in fields[1:]:
        if [c.name for c in f.channels] != names:
            raise ValueError("inconsistent channel lists")
    # accumulate in float64, per field, so ordering only affects rounding at 1e-16
    n = 0
    total = np.zeros(len(names))
    for f in fields:
        total += f.data.astype(np.float64).sum(axis=(1, 2))
        n += f.H * f.W
    mean = total / n
    sq = np.zeros(len(names))
    for f in fields:
        d = f.data.astype(np.float64) - mean[:, None, None]
        sq += (d * d).sum(axis=(1, 2))
    std = np.maximum(np.sqrt(sq / n), STD_FLOOR)
    return NormStats(mean, std)


def _check_channels(field: GridField, stats: NormStats) -> None:
    if field.C != stats.mean.size:
        raise ValueError(f"field has {field.C} channels, stats have {stats.mean.size}")


def normalize(field: GridField, stats: NormStats) -> GridField:
    _check_channels(field, stats)
    out = (field.data.astype(np.float64) - stats.mean[:, None, None]) / stats.std[:, None, None]
    return field.replace(data=out)


def denormalize(field: GridField, stats: NormStats) -> GridField:
    _check_channels(field, stats)
    out = field.data.astype(np.float64) * stats.std[:, None, None] + stats.mean[:, None, None]
    return field.replace(data=out)


def write_stats(stats: NormStats, path) -> None:
    Path(path).write_text(json.dumps(stats.to_json(), indent=2))


def read_stats(path) -> NormStats:
    return NormStats.from_json(json.loads(Path(path).read_text()))


# --- manifests -------------------------------------------------------------

@dataclass
class ManifestRow:
    lr_path: str
    hr_path: str
    region_id: int = 0
    split: str = "train"


def write_manifest(rows: Iterable[ManifestRow], path, **extra) -> None:
    doc = {"version": FORMAT_VERSION, **extra}
    doc["rows"] = [
        {"lr_path": r.lr_path, "hr_path": r.hr_path, "region_id": int(r.region_id), "split": r.split}
        for r in rows
    ]
    Path(path).write_text(json.dumps(doc, indent=2))


def read_manifest(path) -> tuple[list[ManifestRow], dict]:
    doc = json.loads(Path(path).read_text())
    meta = {}
    if isinstance(doc, dict):
        meta = {k: v for k, v in doc.items() if k != "rows"}
        doc = doc["rows"]
    rows = [
        ManifestRow(r["lr_path"], r["hr_path"], int(r.get("region_id", 0)), r.get("split", "train"))
        for r in doc
    ]
    for r in rows:
        if r.split not in SPLITS:
            raise ValueError(f"unknown split {r.split!r} in {path}")
    return rows, meta


def load_split(manifest_path, split: str, stats: NormStats | None = None) -> PairedDataset:
    """Read every pair of one split; paths are relative to the manifest."""
    base = Path(manifest_path).parent
    rows, _ = read_manifest(manifest_path)
    pairs = [
        Pair(read_snapshot(base / r.lr_path), read_snapshot(base / r.hr_path), r.region_id)
        for r in rows
        if r.split == split
    ]
    return PairedDataset(pairs, split, stats)


# --- checkpoints -----------------------------------------------------------

_CKPT_DTYPES = {"f32le": "<f4", "f64le": "<f8"}


def write_checkpoint(path, meta: dict, params: dict[str, np.ndarray], dtype: str = "f32le") -> None:
    """Header = ``meta`` plus a parameter table; payload = flat parameters in table order."""
    if dtype not in _CKPT_DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    table, chunks = [], []
    for name, arr in params.items():
        arr = np.asarray(arr)
        table.append({"name": name, "shape": list(arr.shape)})
        chunks.append(arr.astype(_CKPT_DTYPES[dtype]).tobytes(order="C"))
    header = {"version": FORMAT_VERSION, "kind": "checkpoint", "dtype": dtype, "params": table, **meta}
    _write_framed(Path(path), header, b"".join(chunks))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    header, payload = _read_framed(Path(path))
    if header.get("kind") != "checkpoint":
        raise SnapshotFormatError(f"{path}: not a checkpoint file")
    dtype = header.get("dtype")
    if dtype not in _CKPT_DTYPES:
        raise SnapshotFormatError(f"{path}: unsupported dtype {dtype!r}")
    width = 4 if dtype == "f32le" else 8
    params, offset = {}, 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        end = offset + n * width
        if end > len(payload):
            raise SnapshotFormatError(f"{path}: payload size mismatch")
        params[entry["name"]] = np.frombuffer(payload[offset:end], dtype=_CKPT_DTYPES[dtype]).reshape(shape).copy()
        offset = end
    if offset != len(payload):
        raise SnapshotFormatError(f"{path}: payload size mismatch")
    meta = {k: v for k, v in header.items() if k not in ("params",)}
    return meta, params
