"""Snapshot, statistics, manifest and checkpoint formats."""
import json
import struct

import numpy as np
import pytest

from downscale_bench import io


def field(rng, c=2, h=8, w=12, dx=25.0):
    return io.GridField(rng.standard_normal((c, h, w)).astype(np.float32), dx)


def test_snapshot_round_trip_is_bit_exact(tmp_path, rng):
    f = field(rng)
    io.write_snapshot(f, tmp_path / "a.snap")
    g = io.read_snapshot(tmp_path / "a.snap")
    assert g.shape == f.shape and g.dx_km == f.dx_km
    assert [c.name for c in g.channels] == ["u", "v"]
    np.testing.assert_array_equal(g.data, f.data)


def test_header_layout(tmp_path, rng):
    io.write_snapshot(field(rng, 1, 4, 4), tmp_path / "a.snap")
    raw = (tmp_path / "a.snap").read_bytes()
    (n,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4 : 4 + n])
    assert header["dtype"] == "f32le" and (header["C"], header["H"], header["W"]) == (1, 4, 4)
    assert len(raw) == 4 + n + 16 * 4


def _rewrite(path, **changes):
    raw = path.read_bytes()
    (n,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4 : 4 + n])
    header.update(changes)
    payload = raw[4 + n :]
    new = json.dumps(header).encode()
    path.write_bytes(struct.pack("<I", len(new)) + new + payload)


def test_unsupported_dtype_rejected(tmp_path, rng):
    io.write_snapshot(field(rng), tmp_path / "a.snap")
    _rewrite(tmp_path / "a.snap", dtype="f16le")
    with pytest.raises(io.SnapshotFormatError, match="unsupported dtype"):
        io.read_snapshot(tmp_path / "a.snap")


def test_truncated_payload_rejected(tmp_path, rng):
    io.write_snapshot(field(rng), tmp_path / "a.snap")
    p = tmp_path / "a.snap"
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(io.SnapshotFormatError, match="payload size mismatch"):
        io.read_snapshot(p)


def test_channel_count_mismatch_rejected(tmp_path, rng):
    io.write_snapshot(field(rng), tmp_path / "a.snap")
    _rewrite(tmp_path / "a.snap", channels=[{"name": "u", "unit": "m/s"}])
    with pytest.raises(io.SnapshotFormatError):
        io.read_snapshot(tmp_path / "a.snap")


@pytest.mark.parametrize(
    "data, dx",
    [
        (np.zeros((1, 3, 8)), 1.0),
        (np.zeros((1, 8, 8)), 0.0),
        (np.full((1, 8, 8), np.nan), 1.0),
    ],
)
def test_grid_field_validation(data, dx):
    with pytest.raises(io.GridValidationError):
        io.GridField(data, dx)


def test_two_dimensional_input_becomes_single_channel():
    f = io.GridField(np.ones((6, 7)))
    assert f.shape == (1, 6, 7) and f.C == 1


def test_norm_stats_and_round_trip(rng):
    fields = [field(rng) for _ in range(3)]
    stats = io.compute_norm_stats(fields)
    stacked = np.concatenate([f.data.astype(np.float64) for f in fields], axis=2)
    np.testing.assert_allclose(stats.mean, stacked.mean(axis=(1, 2)), rtol=1e-12)
    np.testing.assert_allclose(stats.std, stacked.std(axis=(1, 2)), rtol=1e-12)
    back = io.denormalize(io.normalize(fields[0], stats), stats)
    np.testing.assert_allclose(back.data, fields[0].data, atol=1e-6)


def test_constant_channel_std_is_floored():
    stats = io.compute_norm_stats([io.GridField(np.ones((1, 8, 8)))])
    assert stats.std[0] > 0


def test_stats_channel_mismatch(rng):
    stats = io.NormStats([0.0], [1.0])
    with pytest.raises(ValueError):
        io.normalize(field(rng), stats)


def test_manifest_and_load_split(tmp_path, rng):
    rows = []
    for i, split in enumerate(["train", "train", "test"]):
        hr = field(rng, h=16, w=16)
        lr = io.GridField(hr.data[:, ::4, ::4].copy(), 100.0)
        io.write_snapshot(lr, tmp_path / f"{i}_lr.snap")
        io.write_snapshot(hr, tmp_path / f"{i}_hr.snap")
        rows.append(io.ManifestRow(f"{i}_lr.snap", f"{i}_hr.snap", i % 2, split))
    io.write_manifest(rows, tmp_path / "m.json", factor=4)
    back, meta = io.read_manifest(tmp_path / "m.json")
    assert back == rows and meta["factor"] == 4
    ds = io.load_split(tmp_path / "m.json", "train")
    assert len(ds) == 2 and ds.factor == 4 and ds.region_ids == [0, 1]


def test_dataset_rejects_mixed_factors(rng):
    a = io.Pair(field(rng, h=4, w=4), field(rng, h=8, w=8))
    b = io.Pair(field(rng, h=4, w=4), field(rng, h=16, w=16))
    with pytest.raises(ValueError, match="different upsampling factors"):
        io.PairedDataset([a, b])


@pytest.mark.parametrize("dtype", ["f32le", "f64le"])
def test_checkpoint_round_trip(tmp_path, rng, dtype):
    params = {"a.weight": rng.standard_normal((3, 4)), "b": rng.standard_normal(5)}
    io.write_checkpoint(tmp_path / "c.ckpt", {"model_spec": {"family": "x"}}, params, dtype=dtype)
    meta, back = io.read_checkpoint(tmp_path / "c.ckpt")
    assert meta["model_spec"] == {"family": "x"}
    tol = 0 if dtype == "f64le" else 1e-6
    for k in params:
        np.testing.assert_allclose(back[k], params[k], atol=tol)


def test_snapshot_is_not_a_checkpoint(tmp_path, rng):
    io.write_snapshot(field(rng), tmp_path / "a.snap")
    with pytest.raises(io.SnapshotFormatError):
        io.read_checkpoint(tmp_path / "a.snap")
