"""Zero-shot weather downscaling benchmark: data, regridding, models, training, evaluation."""

__version__ = "0.1.0"
