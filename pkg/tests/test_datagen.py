"""Synthetic fields, LR construction, patches and dataset configs."""
import numpy as np
import pytest

from downscale_bench import datagen
from downscale_bench.evaluation.spectrum import SpectrumCurve, fit_slope
from downscale_bench.io import GridField

from oracles import binned_energy_direct


def direct_curve(u, v):
    bins = binned_energy_direct(u, v)
    kmax = min(u.shape) // 2
    e = np.array([bins.get(k, 0.0) for k in range(1, kmax + 1)])
    return SpectrumCurve(np.arange(1, kmax + 1), e / e.sum())


def test_grf_slope_against_direct_dft():
    f = datagen.gen_grf(datagen.GrfSpec(H=48, W=48, alpha=3.0, k_min=1, k_max=20, seed=3))
    slope = fit_slope(direct_curve(f.data[0].astype(float), f.data[1].astype(float)), 3, 16)
    assert slope == pytest.approx(-3.0, abs=0.3)


def test_grf_is_zero_mean_with_requested_std():
    f = datagen.gen_grf(datagen.GrfSpec(H=32, W=40, C=3, amplitude_std=2.5, seed=1))
    assert f.shape == (3, 32, 40)
    np.testing.assert_allclose(f.data.mean(axis=(1, 2)), 0, atol=1e-5)
    np.testing.assert_allclose(f.data.std(axis=(1, 2)), 2.5, rtol=1e-5)


def test_grf_seed_determinism():
    spec = datagen.GrfSpec(H=16, W=16, k_max=6, seed=9)
    np.testing.assert_array_equal(datagen.gen_grf(spec).data, datagen.gen_grf(spec).data)
    other = datagen.gen_grf(datagen.GrfSpec(H=16, W=16, k_max=6, seed=10))
    assert not np.allclose(other.data, datagen.gen_grf(spec).data)


def test_same_seed_same_continuous_field_on_finer_grid():
    coarse = datagen.gen_grf(datagen.GrfSpec(H=32, W=32, k_max=8, seed=5))
    fine = datagen.gen_grf(datagen.GrfSpec(H=64, W=64, k_max=8, seed=5))
    # grids share the nodes at even fine indices
    np.testing.assert_allclose(fine.data[:, ::2, ::2], coarse.data, atol=1e-5)


def test_single_band_energy_in_one_bin():
    f = datagen.gen_grf(datagen.GrfSpec(H=32, W=32, k_min=5, k_max=5, seed=2))
    bins = binned_energy_direct(f.data[0].astype(float), f.data[1].astype(float))
    total = sum(bins.values())
    assert bins[5] / total > 0.999


@pytest.mark.parametrize("kw", [dict(k_min=0), dict(k_max=40), dict(alpha=-1.0), dict(k_min=5, k_max=4)])
def test_grf_spec_validation(kw):
    with pytest.raises(ValueError):
        datagen.GrfSpec(H=32, W=32, **kw)


def test_coarsen_shape_and_spacing():
    hr = datagen.gen_grf(datagen.GrfSpec(H=32, W=32, seed=0, dx_km=6.0, k_max=8))
    lr = datagen.coarsen(hr, 4)
    assert lr.shape == (2, 8, 8) and lr.dx_km == pytest.approx(24.0)
    with pytest.raises(ValueError):
        datagen.coarsen(hr, 5)


def test_cross_sim_without_perturbation_is_plain_coarsening():
    hr = datagen.gen_grf(datagen.GrfSpec(H=32, W=32, seed=0, k_max=8))
    a = datagen.gen_cross_sim_lr(hr, 4, datagen.CrossSimSpec())
    np.testing.assert_allclose(a.data, datagen.coarsen(hr, 4).data, atol=1e-6)


def test_cross_sim_perturbations():
    hr = datagen.gen_grf(datagen.GrfSpec(H=32, W=32, seed=0, k_max=8))
    spec = datagen.CrossSimSpec(blur_sigma=1.0, bias_amplitude=0.5, noise_std=0.1, seed=4)
    a = datagen.gen_cross_sim_lr(hr, 4, spec)
    b = datagen.gen_cross_sim_lr(hr, 4, spec)
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.allclose(a.data, datagen.coarsen(hr, 4).data, atol=1e-3)


def test_bias_field_has_one_wave_across_width():
    b = datagen.bias_field(4, 16, 2.0, 1)
    np.testing.assert_allclose(b[0, 4], 2.0, atol=1e-12)
    np.testing.assert_allclose(b.mean(axis=1), 0, atol=1e-12)


def test_patches_are_aligned():
    hr_data = np.arange(2 * 32 * 32, dtype=np.float32).reshape(2, 32, 32)
    hr = GridField(hr_data, 1.0)
    lr = GridField(hr_data[:, ::4, ::4].copy(), 4.0)
    for lr_p, hr_p in datagen.extract_patches((lr, hr), 6, 16, seed=3):
        assert lr_p.shape == (2, 4, 4) and hr_p.shape == (2, 16, 16)
        np.testing.assert_array_equal(hr_p.data[:, ::4, ::4], lr_p.data)


@pytest.mark.parametrize("size", [15, 64])
def test_patch_size_errors(size):
    hr = GridField(np.zeros((1, 32, 32)), 1.0)
    lr = GridField(np.zeros((1, 8, 8)), 4.0)
    with pytest.raises(ValueError):
        datagen.extract_patches((lr, hr), 1, size, seed=0)


def test_dataset_config_json_round_trip():
    cfg = datagen.DatasetConfig(cross_sim=datagen.CrossSimSpec(blur_sigma=1.0), regions=[(32, 48)],
                                eval_factors=[8])
    back = datagen.DatasetConfig.from_json(cfg.to_json())
    assert back == cfg


def test_build_pairs_regions_and_zero_shot():
    cfg = datagen.DatasetConfig(grf=datagen.GrfSpec(H=32, W=32, k_max=6), n_train=2, n_val=1, n_test=2,
                                regions=[(32, 48)])
    pairs = datagen.build_pairs(cfg, "train")
    assert [r for *_, r in pairs] == [0, 0, 1, 1]
    assert pairs[2][1].shape == (2, 32, 48) and pairs[2][0].shape == (2, 8, 12)
    zs = datagen.build_pairs(cfg, "test", factor=8)
    std = datagen.build_pairs(cfg, "test")
    assert zs[0][0].shape == std[0][0].shape == (2, 8, 8)
    assert zs[0][1].shape == (2, 64, 64)
    # the zero-shot truth is the standard truth sampled on a finer grid
    np.testing.assert_allclose(zs[0][1].data[:, ::2, ::2], std[0][1].data, atol=1e-5)
