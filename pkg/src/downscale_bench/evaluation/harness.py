"""Standard and zero-shot evaluation of trained models."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import io
from ..models import Downscaler, PipelineSpec, build_model, downscale_fields, load_checkpoint, resolve_wiring
from ..models.zoo import ModelSpec
from .metrics import MetricsReport, aggregate, data_range_of, pixel_metrics
from .spectrum import SpectrumCurve, field_spectrum, mean_curve

# bins whose truth energy falls below this share are treated as empty
SUPPORT_FLOOR = 1e-8


@dataclass
class EvaluationResult:
    metrics: MetricsReport
    spectrum: SpectrumCurve
    truth_spectrum: SpectrumCurve
    wiring: str
    underestimates_high_k: bool
    flag_detail: dict = field(default_factory=dict)
    predictions: list | None = None


def high_k_underestimation(pred: SpectrumCurve, truth: SpectrumCurve, floor: float = SUPPORT_FLOOR):
    """Whether ``pred`` sits below ``truth`` on the top quartile of truth-supported bins."""
    support = truth.k[truth.E > floor]
    if support.size == 0:
        return False, {"bins": []}
    n_top = max(1, int(np.ceil(support.size / 4)))
    top = support[-n_top:]
    idx = np.searchsorted(truth.k, top)
    below = pred.E[idx] < truth.E[idx]
    detail = {
        "bins": top.tolist(),
        "pred": pred.E[idx].tolist(),
        "truth": truth.E[idx].tolist(),
        "below": below.tolist(),
    }
    return bool(below.all()), detail


def evaluate_model(model: Downscaler, pipeline: PipelineSpec, test: io.PairedDataset, stats: io.NormStats | None,
                   data_range=None, label: str = "", keep_predictions: bool = False) -> EvaluationResult:
    """Metrics and spectra of ``model`` on ``test`` under ``pipeline``; all in physical units."""
    if len(test) == 0:
        raise ValueError("test split is empty")
    if test.factor != pipeline.eval_factor:
        raise ValueError(f"test pairs use factor {test.factor}, pipeline evaluates at {pipeline.eval_factor}")
    if model.spec.train_factor != pipeline.train_factor:
        raise ValueError(
            f"model trained at factor {model.spec.train_factor}, pipeline says {pipeline.train_factor}"
        )
    wiring = resolve_wiring(model.spec.family, pipeline.placement)
    preds = downscale_fields(model, [p.lr for p in test.pairs], pipeline, stats)
    truths = [p.hr for p in test.pairs]
    rng = data_range_of(truths) if data_range is None else data_range
    snaps = [pixel_metrics(p, t, rng) for p, t in zip(preds, truths)]
    setting = "zero-shot" if pipeline.zero_shot else "standard"
    report = aggregate(snaps, pipeline.eval_factor, label=label or model.spec.family,
                       family=model.spec.family, setting=setting)
    curve = mean_curve([field_spectrum(p.data) for p in preds])
    truth_curve = mean_curve([field_spectrum(t.data) for t in truths])
    flag, detail = high_k_underestimation(curve, truth_curve)
    return EvaluationResult(report, curve, truth_curve, wiring, flag, detail, preds if keep_predictions else None)


def zero_shot_evaluate(checkpoint, pipeline: PipelineSpec, test: io.PairedDataset, family: str | None = None,
                       label: str = "") -> EvaluationResult:
    """Load a checkpoint (or take a model) and evaluate it at ``pipeline.eval_factor``."""
    if isinstance(checkpoint, Downscaler):
        model, stats = checkpoint, test.stats
    else:
        model, meta = load_checkpoint(Path(checkpoint))
        stats = io.NormStats.from_json(meta["stats"]) if "stats" in meta else test.stats
    if family is not None and family != model.spec.family:
        raise ValueError(f"checkpoint holds a {model.spec.family} model, expected {family}")
    return evaluate_model(model, pipeline, test, stats, label=label)


def bicubic_reference(pipeline: PipelineSpec, test: io.PairedDataset, in_channels: int | None = None):
    c = in_channels or test.pairs[0].lr.C
    model = build_model(ModelSpec("bicubic", in_channels=c, train_factor=pipeline.train_factor))
    return evaluate_model(model, PipelineSpec("pre_operator", pipeline.train_factor, pipeline.eval_factor),
                          test, None, label="bicubic")
