"""Patch-based supervised and adversarial training, plus sweep drivers."""
from __future__ import annotations

import copy
import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import io
from .datagen import extract_patches
from .evaluation.spectrum import field_spectrum, mean_curve
from .models import (
    ModelSpec,
    PipelineSpec,
    build_model,
    count_parameters,
    default_placement,
    downscale_fields,
    save_checkpoint,
)
from .models.spectral import NonFiniteInputError
from .models.zoo import EXTRACTOR_SWEEP
from .precision import torch_dtype

LOSSES = ("mse", "l1", "gan")


class TrainingDivergedError(RuntimeError):
    """The loss became NaN or infinite."""


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    weight_decay: float = 1e-4
    lr_step: int = 60
    lr_gamma: float = 0.5
    epochs: int = 100
    loss: str = "mse"
    seed: int = 0
    balance_regions: bool = False
    # HR patch edge; None trains on whole fields
    patch_size: int | None = None
    patches_per_snapshot: int = 1
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    workers: int = 1
    lambda_pix: float = 1.0
    lambda_adv: float = 5e-3
    disc_width: int = 32

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.lr_step < 1 or not 0 < self.lr_gamma <= 1:
            raise ValueError("lr_step must be >= 1 and lr_gamma in (0, 1]")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.workers < 1 or self.patches_per_snapshot < 1:
            raise ValueError("workers and patches_per_snapshot must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = math.inf
    checkpoint: str | None = None
    wall_seconds: float = 0.0
    param_count: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["best_val_mse"] = None if math.isinf(self.best_val_mse) else self.best_val_mse
        return d

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate in force during ``epoch`` (0-based)."""
    return cfg.lr * cfg.lr_gamma ** (epoch // cfg.lr_step)


def make_optimizer(params, cfg: TrainConfig):
    opt = torch.optim.AdamW(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda e: cfg.lr_gamma ** (e // cfg.lr_step))
    return opt, sched


# --- data -----------------------------------------------------------------------


def _stats_for(dataset: io.PairedDataset) -> io.NormStats:
    return dataset.stats if dataset.stats is not None else io.compute_norm_stats([p.hr for p in dataset.pairs])


def _normalized_pairs(dataset: io.PairedDataset, stats: io.NormStats):
    return [(io.normalize(p.lr, stats), io.normalize(p.hr, stats), p.region_id) for p in dataset.pairs]


def _epoch_samples(pairs, cfg: TrainConfig, epoch: int):
    """(lr, hr, region) arrays for one epoch; patches are redrawn every epoch."""
    if cfg.patch_size is None:
        return [(lr.data, hr.data, r) for lr, hr, r in pairs]

    def crop(i):
        lr, hr, r = pairs[i]
        seed = np.random.SeedSequence([cfg.seed, epoch, i])
        return [(a.data, b.data, r) for a, b in extract_patches((lr, hr), cfg.patches_per_snapshot, cfg.patch_size, seed)]

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(crop, range(len(pairs))))
    else:
        chunks = [crop(i) for i in range(len(pairs))]
    return [s for chunk in chunks for s in chunk]


def epoch_batches(regions: list[int], cfg: TrainConfig, epoch: int) -> list[np.ndarray]:
    """Sample indices per batch; balanced batches hold an equal share of every region."""
    rng = np.random.default_rng([cfg.seed, epoch])
    regions = np.asarray(regions)
    if not cfg.balance_regions:
        order = rng.permutation(len(regions))
        return [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
    ids = np.unique(regions)
    if cfg.batch_size % len(ids):
        raise ValueError(f"batch_size {cfg.batch_size} is not divisible by {len(ids)} regions")
    share = cfg.batch_size // len(ids)
    per_region = [rng.permutation(np.flatnonzero(regions == r)) for r in ids]
    n_batches = min(len(p) for p in per_region) // share
    if n_batches == 0:
        raise ValueError("a region has fewer samples than its share of one balanced batch")
    return [np.concatenate([p[b * share : (b + 1) * share] for p in per_region]) for b in range(n_batches)]


def _stack(samples, idx, dtype):
    shapes = {samples[i][0].shape for i in idx}
    if len(shapes) > 1:
        raise ValueError("batch mixes grid sizes; set patch_size to train on multiple regions")
    lr = torch.as_tensor(np.stack([samples[i][0] for i in idx]), dtype=dtype)
    hr = torch.as_tensor(np.stack([samples[i][1] for i in idx]), dtype=dtype)
    return lr, hr


def validation_mse(model, dataset: io.PairedDataset, stats: io.NormStats, pipeline: PipelineSpec) -> float:
    """Mean per-snapshot MSE in physical units."""
    preds = downscale_fields(model, [p.lr for p in dataset.pairs], pipeline, stats)
    errs = [float(np.mean((pr.data - p.hr.data.astype(np.float64)) ** 2)) for pr, p in zip(preds, dataset.pairs)]
    return math.fsum(errs) / len(errs)


def _check_inputs(spec: ModelSpec, pipeline: PipelineSpec, dataset: io.PairedDataset):
    if len(dataset) == 0:
        raise ValueError("training split is empty")
    if dataset.factor != pipeline.train_factor or spec.train_factor != pipeline.train_factor:
        raise ValueError(
            f"factor mismatch: dataset {dataset.factor}, pipeline {pipeline.train_factor}, "
            f"model {spec.train_factor}"
        )


def _pixel_loss(kind: str, pred, target):
    return F.l1_loss(pred, target) if kind == "l1" else F.mse_loss(pred, target)


def _check_finite(loss, epoch, step, lr):
    if not torch.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss.item()} at epoch {epoch}, step {step} (lr={lr:.3g})")


def _forward(model, x, factor, epoch, step, lr):
    try:
        return model(x, factor)
    except NonFiniteInputError as exc:
        raise TrainingDivergedError(f"non-finite activations at epoch {epoch}, step {step} (lr={lr:.3g})") from exc


def _check_params(model, epoch, step, lr):
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise TrainingDivergedError(f"parameter {name} became non-finite at epoch {epoch}, step {step} (lr={lr:.3g})")


class _BestKeeper:
    def __init__(self, report: TrainReport):
        self.report, self.state = report, None

    def update(self, model, epoch: int, score: float):
        if score < self.report.best_val_mse:
            self.report.best_val_mse, self.report.best_epoch = score, epoch
            self.state = copy.deepcopy(model.state_dict())

    def restore(self, model):
        if self.state is not None:
            model.load_state_dict(self.state)


def _finish(model, report, keeper, start, out_dir, stats, cfg, pipeline, name="model"):
    keeper.restore(model)
    report.wall_seconds = time.perf_counter() - start
    report.param_count = count_parameters(model)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / f"{name}.ckpt"
        save_checkpoint(ckpt, model, stats=stats.to_json(), train_config=cfg.to_json(),
                        pipeline=pipeline.to_json(), best_epoch=report.best_epoch)
        report.checkpoint = str(ckpt)
        report.write(out / f"{name}_report.json")
    return report


def train(model_spec: ModelSpec, pipeline: PipelineSpec, dataset: io.PairedDataset, cfg: TrainConfig,
          val: io.PairedDataset | None = None, out_dir=None, model=None):
    """Supervised training; returns ``(report, model)`` with the best-validation parameters loaded.

    Without a validation split the best epoch is the one with the lowest training loss.
    """
    if cfg.loss == "gan":
        return train_gan(model_spec, dataset, cfg, val=val, out_dir=out_dir, pipeline=pipeline)
    _check_inputs(model_spec, pipeline, dataset)
    start = time.perf_counter()
    dtype = torch_dtype()
    model = build_model(model_spec, seed=cfg.seed, dtype=dtype) if model is None else model
    stats = _stats_for(dataset)
    pairs = _normalized_pairs(dataset, stats)
    opt, sched = make_optimizer(model.parameters(), cfg)
    train_pipe = replace(pipeline, eval_factor=pipeline.train_factor)
    report = TrainReport()
    keeper = _BestKeeper(report)
    for epoch in range(cfg.epochs):
        model.train()
        samples = _epoch_samples(pairs, cfg, epoch)
        lr_now = opt.param_groups[0]["lr"]
        total, count = 0.0, 0
        for step, idx in enumerate(epoch_batches([s[2] for s in samples], cfg, epoch)):
            x, y = _stack(samples, idx, dtype)
            opt.zero_grad(set_to_none=True)
            loss = _pixel_loss(cfg.loss, _forward(model, x, pipeline.train_factor, epoch, step, lr_now), y)
            _check_finite(loss, epoch, step, lr_now)
            loss.backward()
            opt.step()
            _check_params(model, epoch, step, lr_now)
            total += loss.item() * len(idx)
            count += len(idx)
        sched.step()
        report.lr.append(lr_now)
        report.train_loss.append(total / count)
        score = validation_mse(model, val, stats, train_pipe) if val is not None and len(val) else total / count
        if val is not None and len(val):
            report.val_mse.append(score)
        keeper.update(model, epoch, score)
    return _finish(model, report, keeper, start, out_dir, stats, cfg, pipeline), model


def overfit_batch(model, x: torch.Tensor, y: torch.Tensor, factor: int, steps: int = 2000,
                  lr: float = 1e-3) -> list[float]:
    """Fit one fixed batch with Adam; returns the MSE after every step."""
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    model.train()
    for _ in range(steps):
        opt.zero_grad(set_to_none=True)
        loss = F.mse_loss(model(x, factor), y)
        loss.backward()
        opt.step()
        history.append(loss.item())
    return history


# --- adversarial training --------------------------------------------------------------


class Discriminator(nn.Module):
    """Four strided 3x3 convolutions, global average pool, linear head."""

    def __init__(self, in_channels: int, width: int = 32):
        super().__init__()
        chans = [in_channels, width, 2 * width, 4 * width, 4 * width]
        self.convs = nn.ModuleList(nn.Conv2d(a, b, 3, stride=2, padding=1) for a, b in zip(chans, chans[1:]))
        self.head = nn.Linear(chans[-1], 1)

    def forward(self, x):
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
        return self.head(x.mean(dim=(-2, -1))).squeeze(-1)


def discriminator_loss(disc, real, fake):
    return F.softplus(-disc(real)).mean() + F.softplus(disc(fake)).mean()


def generator_adv_loss(disc, fake):
    """Non-saturating generator objective."""
    return F.softplus(-disc(fake)).mean()


def balance_discriminator(disc, real, fake, steps: int = 5000, lr: float = 0.5, tol: float = 1e-7) -> float:
    """Train ``disc`` by gradient descent on a frozen real/fake pair; returns the final gradient norm."""
    opt = torch.optim.SGD(disc.parameters(), lr=lr)
    norm = math.inf
    for _ in range(steps):
        opt.zero_grad(set_to_none=True)
        discriminator_loss(disc, real, fake).backward()
        norm = math.sqrt(sum(float((p.grad**2).sum()) for p in disc.parameters() if p.grad is not None))
        if norm < tol:
            break
        opt.step()
    return norm


def train_gan(generator_spec: ModelSpec, dataset: io.PairedDataset, cfg: TrainConfig,
              val: io.PairedDataset | None = None, out_dir=None, pipeline: PipelineSpec | None = None):
    """Alternating discriminator/generator updates; loss = lambda_pix * L1 + lambda_adv * adversarial.

    The discriminator is built after the generator so that ``lambda_adv = 0`` reproduces
    a pure-L1 run step for step. Only the generator is checkpointed.
    """
    if generator_spec.family != "esrgan_lite":
        raise ValueError(f"adversarial training needs family esrgan_lite, got {generator_spec.family}")
    pipeline = pipeline or PipelineSpec("post_model", generator_spec.train_factor, generator_spec.train_factor)
    _check_inputs(generator_spec, pipeline, dataset)
    start = time.perf_counter()
    dtype = torch_dtype()
    gen = build_model(generator_spec, seed=cfg.seed, dtype=dtype)
    disc = Discriminator(generator_spec.in_channels, cfg.disc_width).to(dtype)
    stats = _stats_for(dataset)
    pairs = _normalized_pairs(dataset, stats)
    opt_g, sched_g = make_optimizer(gen.parameters(), cfg)
    opt_d, sched_d = make_optimizer(disc.parameters(), cfg)
    report = TrainReport()
    keeper = _BestKeeper(report)
    s = generator_spec.train_factor
    for epoch in range(cfg.epochs):
        gen.train()
        samples = _epoch_samples(pairs, cfg, epoch)
        lr_now = opt_g.param_groups[0]["lr"]
        total, count = 0.0, 0
        for step, idx in enumerate(epoch_batches([x[2] for x in samples], cfg, epoch)):
            x, y = _stack(samples, idx, dtype)
            fake = _forward(gen, x, s, epoch, step, lr_now)
            opt_d.zero_grad(set_to_none=True)
            d_loss = discriminator_loss(disc, y, fake.detach())
            _check_finite(d_loss, epoch, step, lr_now)
            d_loss.backward()
            opt_d.step()
            opt_g.zero_grad(set_to_none=True)
            g_loss = cfg.lambda_pix * F.l1_loss(fake, y) + cfg.lambda_adv * generator_adv_loss(disc, fake)
            _check_finite(g_loss, epoch, step, lr_now)
            g_loss.backward()
            opt_g.step()
            _check_params(gen, epoch, step, lr_now)
            total += g_loss.item() * len(idx)
            count += len(idx)
        sched_g.step()
        sched_d.step()
        report.lr.append(lr_now)
        report.train_loss.append(total / count)
        score = validation_mse(gen, val, stats, pipeline) if val is not None and len(val) else total / count
        if val is not None and len(val):
            report.val_mse.append(score)
        keeper.update(gen, epoch, score)
    return _finish(gen, report, keeper, start, out_dir, stats, cfg, pipeline, name="generator"), gen


# --- sweeps ---------------------------------------------------------------------------


def _split_mse(model, ds, stats, pipeline):
    return validation_mse(model, ds, stats, pipeline) if ds is not None and len(ds) else None


def _test_curve(model, ds, stats, pipeline):
    if ds is None or not len(ds):
        return None
    preds = downscale_fields(model, [p.lr for p in ds.pairs], pipeline, stats)
    return mean_curve([field_spectrum(p.data) for p in preds])


def _sweep(specs, labels, dataset, cfg, val, test, pipeline, out_dir):
    rows, curves = [], {}
    for label, spec in zip(labels, specs):
        pipe = pipeline or PipelineSpec(default_placement(spec.family), spec.train_factor, spec.train_factor)
        sub = None if out_dir is None else Path(out_dir) / "_".join(f"{k}{v}" for k, v in label.items())
        report, model = train(spec, pipe, dataset, cfg, val=val, out_dir=sub)
        stats = _stats_for(dataset)
        rows.append({
            **label,
            "train_mse": _split_mse(model, dataset, stats, pipe),
            "val_mse": _split_mse(model, val, stats, pipe),
            "test_mse": _split_mse(model, test, stats, pipe),
            "param_count": report.param_count,
            "best_epoch": report.best_epoch,
            "wall_seconds": report.wall_seconds,
        })
        curves[tuple(label.values())] = _test_curve(model, test, stats, pipe)
    return rows, curves


def sweep_modes(base_spec: ModelSpec, modes_list, dataset: io.PairedDataset, cfg: TrainConfig,
                val=None, test=None, pipeline: PipelineSpec | None = None, out_dir=None):
    """Train one model per mode count; returns (rows, test-spectrum curves keyed by modes)."""
    hr = dataset.pairs[0].hr if len(dataset) else None
    if hr is not None:
        grid = cfg.patch_size or min(hr.H, hr.W)
        band = grid // 2 + 1
        too_big = [m for m in modes_list if m > band]
        if too_big:
            raise ValueError(f"modes {too_big} exceed the training band {band}")
    specs = [replace(base_spec, modes=int(m)) for m in modes_list]
    return _sweep(specs, [{"modes": int(m)} for m in modes_list], dataset, cfg, val, test, pipeline, out_dir)


def sweep_extractor(base_spec: ModelSpec, blocks_list=EXTRACTOR_SWEEP, dataset=None, cfg=None,
                    val=None, test=None, extractors=("rrdb",), pipeline=None, out_dir=None):
    """Train one model per (extractor, block count); every run shares the training budget."""
    if dataset is None or cfg is None:
        raise ValueError("sweep_extractor needs a dataset and a TrainConfig")
    labels, specs = [], []
    for ext in extractors:
        for n in blocks_list:
            labels.append({"extractor": ext, "n_extractor_blocks": int(n)})
            specs.append(replace(base_spec, extractor=ext, n_extractor_blocks=int(n)))
    return _sweep(specs, labels, dataset, cfg, val, test, pipeline, out_dir)


def write_sweep_table(rows, path) -> None:
    """CSV with one row per sweep point."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
