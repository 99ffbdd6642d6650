"""Property-based checks of the core invariants."""
import numpy as np
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from downscale_bench import io
from downscale_bench.evaluation import metrics
from downscale_bench.evaluation.spectrum import binned_energy, energy_spectrum
from downscale_bench.models import FAMILIES, PLACEMENTS, resolve_wiring
from downscale_bench.models.spectral import SpectralConv2d
from downscale_bench.regrid import bicubic_array
from downscale_bench.training import TrainConfig, epoch_batches, lr_at_epoch

FAST = settings(max_examples=40, deadline=None)
finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def grids(min_side=4, max_side=12):
    return st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side)).flatmap(
        lambda hw: arrays(np.float64, hw, elements=st.floats(-10, 10, allow_nan=False)))


@FAST
@given(value=finite, factor=st.integers(2, 15), h=st.integers(4, 9), w=st.integers(4, 9))
def test_bicubic_preserves_constants(value, factor, h, w):
    out = bicubic_array(np.full((1, h, w), value), factor)
    assert out.shape == (1, h * factor, w * factor)
    np.testing.assert_allclose(out, value, atol=1e-6 * max(1.0, abs(value)))


@FAST
@given(u=grids(), seed=st.integers(0, 2**16))
def test_spectrum_normalized_and_parseval(u, seed):
    v = np.random.default_rng(seed).standard_normal(u.shape)
    curve = energy_spectrum(u, v)
    assert np.all(curve.E >= 0)
    assert abs(curve.E.sum() - 1.0) < 1e-6
    raw = binned_energy(u, v).sum()
    expect = 0.5 * np.mean((u - u.mean()) ** 2 + (v - v.mean()) ** 2)
    assert abs(raw - expect) <= 1e-5 * expect


@FAST
@given(a=st.floats(1e-8, 1e3), b=st.floats(1e-8, 1e3), rng_=st.floats(0.1, 100))
def test_psnr_monotone_in_mse(a, b, rng_):
    lo, hi = sorted((a, b))
    if hi > lo and lo >= rng_**2 * 1e-10:
        assert metrics.psnr(hi, rng_) < metrics.psnr(lo, rng_)


@FAST
@given(seed=st.integers(0, 2**16), c=st.integers(1, 3))
def test_mae_bounded_by_in(seed, c):
    r = np.random.default_rng(seed)
    p, t = io.GridField(r.standard_normal((c, 6, 7))), io.GridField(r.standard_normal((c, 6, 7)))
    m = metrics.pixel_metrics(p, t, 1.0)
    assert np.all(m.mse >= 0) and np.all(m.mae <= m.inf)


@FAST
@given(seed=st.integers(0, 2**16), n=st.integers(2, 12))
def test_aggregation_is_order_independent(seed, n):
    r = np.random.default_rng(seed)
    t = io.GridField(np.zeros((2, 4, 4)))
    snaps = [metrics.pixel_metrics(io.GridField(r.standard_normal((2, 4, 4)) * 10 ** r.uniform(-3, 3)), t, 5.0)
             for _ in range(n)]
    a = metrics.aggregate(snaps)
    b = metrics.aggregate(snaps[::-1])
    assert abs(a.mse - b.mse) <= 1e-12 * max(a.mse, 1) and abs(a.inf - b.inf) <= 1e-12 * max(a.inf, 1)


@FAST
@given(alpha=finite, beta=finite, seed=st.integers(0, 2**16))
def test_spectral_conv_is_linear(alpha, beta, seed):
    torch.manual_seed(seed)
    layer = SpectralConv2d(2, 2, 3).double()
    x, y = torch.randn(2, 1, 2, 8, 8, dtype=torch.float64)
    lhs = layer(alpha * x + beta * y)
    rhs = alpha * layer(x) + beta * layer(y)
    torch.testing.assert_close(lhs, rhs, atol=1e-9 * (1 + abs(alpha) + abs(beta)), rtol=1e-9)


@FAST
@given(seed=st.integers(0, 2**16), mean=finite, std=st.floats(0.1, 50))
def test_normalize_round_trip(seed, mean, std):
    data = np.random.default_rng(seed).standard_normal((2, 5, 6)) * std + mean
    f = io.GridField(data)
    stats = io.compute_norm_stats([f])
    back = io.denormalize(io.normalize(f, stats), stats)
    np.testing.assert_allclose(back.data, data, rtol=1e-10, atol=1e-10 * (abs(mean) + std))


@given(family=st.sampled_from(FAMILIES), placement=st.sampled_from(PLACEMENTS))
def test_wiring_is_a_pure_function(family, placement):
    def outcome():
        try:
            return resolve_wiring(family, placement)
        except ValueError as exc:
            return type(exc).__name__

    assert outcome() == outcome()


@FAST
@given(counts=st.lists(st.integers(2, 9), min_size=1, max_size=3), share=st.integers(1, 2),
       seed=st.integers(0, 100), epoch=st.integers(0, 5))
def test_balanced_batches_are_uniform(counts, share, seed, epoch):
    regions = [r for r, n in enumerate(counts) for _ in range(n)]
    cfg = TrainConfig(batch_size=share * len(counts), balance_regions=True, seed=seed)
    for batch in epoch_batches(regions, cfg, epoch):
        hist = np.bincount(np.asarray(regions)[batch], minlength=len(counts))
        assert np.all(hist == share)


@given(lr=st.floats(1e-6, 1.0), step=st.integers(1, 50), gamma=st.floats(0.01, 1.0), epoch=st.integers(0, 500))
def test_lr_schedule_closed_form(lr, step, gamma, epoch):
    assert lr_at_epoch(TrainConfig(lr=lr, lr_step=step, lr_gamma=gamma), epoch) == lr * gamma ** (epoch // step)
