import numpy as np
import pytest
import torch

from downscale_bench.datagen import DatasetConfig, GrfSpec, build_pairs
from downscale_bench.io import Pair, PairedDataset
from downscale_bench.precision import ENV_VAR


@pytest.fixture
def f64(monkeypatch):
    """Run the test in 64-bit mode."""
    monkeypatch.setenv(ENV_VAR, "f64")
    yield torch.float64


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_split(cfg: DatasetConfig, split: str, factor=None) -> PairedDataset:
    return PairedDataset([Pair(*p) for p in build_pairs(cfg, split, factor)], split)


@pytest.fixture(scope="session")
def tiny_cfg():
    return DatasetConfig(grf=GrfSpec(H=32, W=32, k_max=6), n_train=8, n_val=4, n_test=4, train_factor=4,
                         eval_factors=[8])


@pytest.fixture(scope="session")
def tiny_data(tiny_cfg):
    return {s: make_split(tiny_cfg, s) for s in ("train", "val", "test")} | {"test_x8": make_split(tiny_cfg, "test", 8)}


# --- acceptance summary ------------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not rep.failed:
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and call.excinfo is not None:
        detail = detail or call.excinfo.exconly().splitlines()[0][:160]
    _ACCEPTANCE[marker.args[0]] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
