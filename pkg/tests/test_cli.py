"""End-to-end command-line runs on a tiny synthetic dataset."""
import json

import pytest

from downscale_bench import cli

DATASET = {"grf": {"H": 32, "W": 32, "k_max": 6}, "n_train": 8, "n_val": 4, "n_test": 4,
           "train_factor": 4, "eval_factors": [8]}
MODEL = {"family": "dfno", "width": 8, "modes": 4, "n_extractor_blocks": 1, "growth": 8}
TRAIN = {"lr": 1e-3, "batch_size": 4, "epochs": 2, "seed": 0}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = write(root / "grf.json", DATASET)
    assert cli.run(["datagen", "--spec", str(spec), "--out", str(root / "data")]) == 0
    return root / "data"


def train_and_evaluate(root, data_dir, name):
    cfg = write(root / f"{name}.json", {"model": MODEL, "train": TRAIN})
    run_dir = root / name
    assert cli.run(["train", "--config", str(cfg), "--data", str(data_dir / "manifest.json"),
                    "--out", str(run_dir)]) == 0
    ev = run_dir / "eval_x8"
    assert cli.run(["evaluate", "--checkpoint", str(run_dir / "model.ckpt"), "--eval-factor", "8",
                    "--data", str(data_dir / "manifest.json"), "--out", str(ev)]) == 0
    return run_dir, ev


def test_datagen_layout(data_dir):
    for name in ("manifest.json", "manifest_x8.json", "stats.json", "config.json"):
        assert (data_dir / name).exists()
    echoed = json.loads((data_dir / "config.json").read_text())
    assert echoed["schema_version"] == cli.SCHEMA_VERSION and echoed["command"] == "datagen"


def test_train_evaluate_is_bytewise_reproducible(tmp_path, data_dir):
    _, ev_a = train_and_evaluate(tmp_path, data_dir, "a")
    _, ev_b = train_and_evaluate(tmp_path, data_dir, "b")
    assert (ev_a / "metrics.csv").read_bytes() == (ev_b / "metrics.csv").read_bytes()
    rows = (ev_a / "metrics.csv").read_text().splitlines()
    assert len(rows) == 3 and "zero-shot" in rows[1]
    assert (ev_a / "flags.json").exists() and (ev_a / "spectrum_zero-shot_x8.png").exists()


def test_train_replays_from_echoed_config(tmp_path, data_dir):
    run_dir, _ = train_and_evaluate(tmp_path, data_dir, "orig")
    echoed = run_dir / "config.json"
    replay = tmp_path / "replay"
    assert cli.run(["train", "--config", str(echoed), "--data", str(data_dir / "manifest.json"),
                    "--out", str(replay)]) == 0
    assert (replay / "model.ckpt").read_bytes() == (run_dir / "model.ckpt").read_bytes()


def test_spectrum_and_plot(tmp_path, data_dir):
    out = tmp_path / "spec"
    assert cli.run(["spectrum", "--data", str(data_dir / "manifest.json"), "--out", str(out)]) == 0
    fit = json.loads((out / "spectrum_fit.json").read_text())
    assert fit["n_fields"] == 4
    assert cli.run(["plot", "--data", str(out / "spectrum.csv"), "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "spectrum_all.png").exists()


def test_info_prints_spec(tmp_path, capsys):
    cfg = write(tmp_path / "m.json", {"model": {"width": 16, "n_extractor_blocks": 12}})
    assert cli.run(["info", "--model", "dfno", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    info = json.loads(out[: out.rindex("}") + 1])
    assert info["family"] == "dfno" and info["spec"]["width"] == 16
    assert info["param_count"] > info["rrdb_extractor_param_count"] > 0


def test_unknown_command_exits_1(capsys):
    assert cli.run(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path):
    assert cli.run(["evaluate", "--checkpoint", str(tmp_path / "none.ckpt"),
                    "--data", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1


def test_invalid_spec_exits_1(tmp_path):
    cfg = write(tmp_path / "m.json", {"model": {"family": "fno", "train_factor": 1}})
    assert cli.run(["info", "--config", str(cfg)]) == 1


def test_missing_zero_shot_set_exits_1(tmp_path, data_dir):
    run_dir, _ = train_and_evaluate(tmp_path, data_dir, "z")
    assert cli.run(["evaluate", "--checkpoint", str(run_dir / "model.ckpt"), "--eval-factor", "12",
                    "--data", str(data_dir / "manifest.json"), "--out", str(tmp_path / "e12")]) == 1


def test_divergence_exits_2(tmp_path, data_dir):
    cfg = write(tmp_path / "bad.json", {"model": MODEL, "train": {**TRAIN, "lr": 1e30, "weight_decay": 0.0}})
    assert cli.run(["train", "--config", str(cfg), "--data", str(data_dir / "manifest.json"),
                    "--out", str(tmp_path / "bad")]) == 2


def test_inputs_not_mutated(tmp_path, data_dir):
    before = {p: p.read_bytes() for p in data_dir.rglob("*") if p.is_file()}
    cli.run(["spectrum", "--data", str(data_dir / "manifest.json"), "--out", str(tmp_path / "s")])
    assert {p: p.read_bytes() for p in data_dir.rglob("*") if p.is_file()} == before
