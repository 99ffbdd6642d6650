"""Optimizer, schedule, batching, determinism and the sweep drivers."""
from dataclasses import replace

import numpy as np
import pytest
import torch

from downscale_bench import training
from downscale_bench.datagen import GrfSpec, coarsen, gen_grf
from downscale_bench.io import GridField, Pair, PairedDataset, compute_norm_stats
from downscale_bench.models import ModelSpec, PipelineSpec, build_model, load_checkpoint
from downscale_bench.regrid import bicubic_array
from downscale_bench.training import TrainConfig

TINY_DFNO = ModelSpec("dfno", width=8, modes=4, n_extractor_blocks=1, growth=8)
PIPE = PipelineSpec("pre_operator", 4, 4)


def test_default_hyperparameters():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.batch_size, cfg.weight_decay, cfg.lr_step) == (1e-4, 32, 1e-4, 60)
    assert cfg.betas == (0.9, 0.999) and cfg.eps == 1e-8


@pytest.mark.parametrize("kw", [dict(lr=0.0), dict(batch_size=0), dict(epochs=0), dict(loss="hinge")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_json_round_trip():
    cfg = TrainConfig(lr=3e-4, patch_size=16, balance_regions=True)
    assert TrainConfig.from_json(cfg.to_json()) == cfg


def test_one_adam_step_closed_form():
    cfg = TrainConfig(lr=1e-2, weight_decay=1e-4)
    p0 = torch.tensor([0.3, -1.2, 2.5], dtype=torch.float64)
    a = torch.tensor([2.0, 0.5, 1.5], dtype=torch.float64)
    p = torch.nn.Parameter(p0.clone())
    opt, _ = training.make_optimizer([p], cfg)
    (0.5 * a * p**2).sum().backward()
    opt.step()
    g = (a * p0).numpy()
    # bias-corrected moments after one step are g and g^2
    expect = p0.numpy() * (1 - cfg.lr * cfg.weight_decay) - cfg.lr * g / (np.abs(g) + cfg.eps)
    np.testing.assert_allclose(p.detach().numpy(), expect, rtol=0, atol=1e-10)


def test_lr_schedule_is_exact_step_decay():
    cfg = TrainConfig(lr=1e-3, lr_step=3, lr_gamma=0.5)
    p = torch.nn.Parameter(torch.zeros(1))
    opt, sched = training.make_optimizer([p], cfg)
    for e in range(10):
        assert opt.param_groups[0]["lr"] == training.lr_at_epoch(cfg, e) == 1e-3 * 0.5 ** (e // 3)
        opt.step()
        sched.step()


def test_balanced_batches_are_uniform():
    regions = [0] * 10 + [1] * 14
    cfg = TrainConfig(batch_size=4, balance_regions=True, seed=3)
    batches = training.epoch_batches(regions, cfg, 0)
    assert len(batches) == 5
    for b in batches:
        assert np.bincount(np.asarray(regions)[b]).tolist() == [2, 2]
    with pytest.raises(ValueError):
        training.epoch_batches(regions, replace(cfg, batch_size=3), 0)


def test_unbalanced_batches_cover_every_sample_once():
    batches = training.epoch_batches(list(range(10)), TrainConfig(batch_size=4), 2)
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


def test_bitwise_determinism(f64, tiny_data):
    cfg = TrainConfig(lr=1e-3, batch_size=4, epochs=3, seed=7, patch_size=16)
    r1, m1 = training.train(TINY_DFNO, PIPE, tiny_data["train"], cfg, val=tiny_data["val"])
    r2, m2 = training.train(TINY_DFNO, PIPE, tiny_data["train"], cfg, val=tiny_data["val"])
    assert r1.train_loss == r2.train_loss and r1.val_mse == r2.val_mse
    for a, b in zip(m1.state_dict().values(), m2.state_dict().values()):
        assert torch.equal(a, b)


def test_best_checkpoint_is_argmin_and_written(tmp_path, tiny_data):
    cfg = TrainConfig(lr=1e-3, batch_size=4, epochs=4)
    report, model = training.train(TINY_DFNO, PIPE, tiny_data["train"], cfg, val=tiny_data["val"],
                                   out_dir=tmp_path)
    assert report.best_epoch == int(np.argmin(report.val_mse))
    assert report.best_val_mse == min(report.val_mse)
    assert report.lr == [1e-3] * 4
    loaded, meta = load_checkpoint(report.checkpoint)
    assert meta["best_epoch"] == report.best_epoch and "stats" in meta
    stats = compute_norm_stats([p.hr for p in tiny_data["train"].pairs])
    val_pipe = replace(PIPE, eval_factor=4)
    assert training.validation_mse(loaded, tiny_data["val"], stats, val_pipe) == pytest.approx(
        report.best_val_mse, rel=1e-5)
    assert (tmp_path / "model_report.json").exists()


def test_divergence_aborts(tiny_data):
    model = build_model(TINY_DFNO, seed=0)
    with torch.no_grad():
        model.head.proj2.bias.fill_(float("nan"))
    with pytest.raises(training.TrainingDivergedError, match="epoch 0"):
        training.train(TINY_DFNO, PIPE, tiny_data["train"], TrainConfig(batch_size=4, epochs=1), model=model)


def test_empty_split_rejected():
    with pytest.raises(ValueError, match="empty"):
        training.train(TINY_DFNO, PIPE, PairedDataset([], "train"), TrainConfig())


def test_factor_mismatch_rejected(tiny_data):
    with pytest.raises(ValueError, match="factor"):
        training.train(replace(TINY_DFNO, train_factor=2), PipelineSpec("pre_operator", 2, 2),
                       tiny_data["train"], TrainConfig())


def test_validation_mse_in_physical_units(tiny_data):
    bicubic = build_model(ModelSpec("bicubic"))
    pairs = tiny_data["val"].pairs
    scaled = PairedDataset([Pair(p.lr.replace(data=10 * p.lr.data), p.hr.replace(data=10 * p.hr.data))
                            for p in pairs], "val")
    stats = compute_norm_stats([p.hr for p in pairs])
    stats10 = compute_norm_stats([p.hr for p in scaled.pairs])
    base = training.validation_mse(bicubic, tiny_data["val"], stats, PIPE)
    direct = np.mean([np.mean((bicubic_array(p.lr.data.astype(float), 4) - p.hr.data) ** 2) for p in pairs])
    assert base == pytest.approx(direct, rel=1e-5)
    assert training.validation_mse(bicubic, scaled, stats10, PIPE) == pytest.approx(100 * base, rel=1e-4)


@pytest.mark.slow
def test_overfit_single_batch():
    torch.manual_seed(0)
    hr = gen_grf(GrfSpec(H=32, W=32, k_max=6, seed=0))
    lr = coarsen(hr, 4)
    x, y = torch.tensor(lr.data)[None], torch.tensor(hr.data)[None]
    model = build_model(ModelSpec("dfno", width=16, modes=8, n_extractor_blocks=1, growth=16), seed=0)
    history = training.overfit_batch(model, x, y, 4, steps=2000)
    assert history[-1] < 1e-3


# --- adversarial training ------------------------------------------------------------

GAN_SPEC = ModelSpec("esrgan_lite", width=8, n_extractor_blocks=1, growth=8)
POST = PipelineSpec("post_model", 4, 4)


def test_gan_without_adversarial_term_is_l1(f64, tiny_data):
    cfg = TrainConfig(lr=1e-3, batch_size=4, epochs=3, seed=2)
    gan, _ = training.train_gan(GAN_SPEC, tiny_data["train"], replace(cfg, loss="gan", lambda_adv=0.0))
    l1, _ = training.train(GAN_SPEC, POST, tiny_data["train"], replace(cfg, loss="l1"))
    assert gan.train_loss[-1] == pytest.approx(l1.train_loss[-1], rel=0.05)


def test_discriminator_balances_on_identical_batches(f64):
    torch.manual_seed(0)
    disc = training.Discriminator(2, width=4).double()
    batch = torch.randn(4, 2, 16, 16, dtype=torch.float64)
    norm = training.balance_discriminator(disc, batch, batch.clone())
    assert norm < 1e-6
    # the head bias gradient vanishes only when the mean logit does
    assert abs(disc(batch).mean().item()) < 1e-6


def test_gan_checkpoint_holds_generator_only(tmp_path, tiny_data):
    cfg = TrainConfig(lr=1e-4, batch_size=4, epochs=1, loss="gan")
    report, _ = training.train(GAN_SPEC, POST, tiny_data["train"], cfg, out_dir=tmp_path)
    model, _ = load_checkpoint(report.checkpoint)
    assert model.spec.family == "esrgan_lite"
    assert not any(k.startswith("convs") or k.startswith("head") for k in model.state_dict())


def test_gan_needs_esrgan(tiny_data):
    with pytest.raises(ValueError):
        training.train_gan(TINY_DFNO, tiny_data["train"], TrainConfig(loss="gan"))


# --- sweeps ---------------------------------------------------------------------------------


def test_single_element_mode_sweep_equals_train(f64, tiny_data):
    cfg = TrainConfig(lr=1e-3, batch_size=4, epochs=2)
    spec = ModelSpec("fno", width=8, modes=4)
    rows, curves = training.sweep_modes(spec, [4], tiny_data["train"], cfg, val=tiny_data["val"],
                                        test=tiny_data["test"])
    report, _ = training.train(spec, PIPE, tiny_data["train"], cfg, val=tiny_data["val"])
    assert len(rows) == 1 and rows[0]["modes"] == 4
    assert rows[0]["val_mse"] == report.best_val_mse
    assert curves[(4,)] is not None


def test_modes_beyond_band_rejected(tiny_data):
    with pytest.raises(ValueError, match="band"):
        training.sweep_modes(ModelSpec("fno", width=8), [4, 40], tiny_data["train"], TrainConfig())


def test_extractor_sweep_rows(tmp_path, tiny_data):
    cfg = TrainConfig(lr=1e-3, batch_size=4, epochs=1)
    base = ModelSpec("dfno", width=8, modes=4, growth=8, swin_depth=2, swin_heads=2, window=4)
    rows, _ = training.sweep_extractor(base, [1], tiny_data["train"], cfg, val=tiny_data["val"],
                                       extractors=("rrdb", "rstb"), out_dir=tmp_path)
    assert [(r["extractor"], r["n_extractor_blocks"]) for r in rows] == [("rrdb", 1), ("rstb", 1)]
    assert all(r["val_mse"] > 0 for r in rows)
    training.write_sweep_table(rows, tmp_path / "sweep.csv")
    assert (tmp_path / "sweep.csv").read_text().startswith("extractor,n_extractor_blocks")


def test_patches_redrawn_each_epoch(tiny_data):
    stats = compute_norm_stats([p.hr for p in tiny_data["train"].pairs])
    pairs = training._normalized_pairs(tiny_data["train"], stats)
    cfg = TrainConfig(patch_size=16)
    a = training._epoch_samples(pairs, cfg, 0)
    b = training._epoch_samples(pairs, cfg, 1)
    assert a[0][1].shape == (2, 16, 16)
    assert any(not np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    threaded = training._epoch_samples(pairs, replace(cfg, workers=3), 0)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, threaded))
