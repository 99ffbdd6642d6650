"""Metrics, spectra, the evaluation harness and report writers."""
from .harness import EvaluationResult, bicubic_reference, evaluate_model, high_k_underestimation, zero_shot_evaluate
from .metrics import MetricsReport, aggregate, data_range_of, pixel_metrics, psnr
from .report import emit_report, format_table, read_spectrum_csv, write_spectrum_csv
from .spectrum import SpectrumCurve, energy_spectrum, field_spectrum, fit_slope, mean_curve

__all__ = [
    "EvaluationResult",
    "MetricsReport",
    "SpectrumCurve",
    "aggregate",
    "bicubic_reference",
    "data_range_of",
    "emit_report",
    "energy_spectrum",
    "evaluate_model",
    "field_spectrum",
    "fit_slope",
    "format_table",
    "high_k_underestimation",
    "mean_curve",
    "pixel_metrics",
    "psnr",
    "read_spectrum_csv",
    "write_spectrum_csv",
    "zero_shot_evaluate",
]
