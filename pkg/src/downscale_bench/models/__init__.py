"""Operator layers, feature extractors and the model zoo."""
from .blocks import RRDBExtractor, RSTBExtractor, SubPixelUpsampler, rrdb_extractor_param_count, shuffle_factors
from .operators import (
    FNOBlocks,
    OperatorContractError,
    UNOBlocks,
    check_operator_contract,
    get_operator,
    register_operator,
    registered_operators,
)
from .spectral import LocalLayer, ModeClipWarning, SpectralConv2d, fourier_resample, local_layer, spectral_conv2d
from .zoo import (
    BASELINE_FAMILIES,
    FAMILIES,
    OPERATOR_FAMILIES,
    PLACEMENTS,
    PipelineSpec,
    Downscaler,
    ModelSpec,
    ResolutionContractError,
    build_model,
    count_parameters,
    default_placement,
    downscale_fields,
    load_checkpoint,
    param_count,
    resolve_wiring,
    run_pipeline,
    save_checkpoint,
)

__all__ = [name for name in dir() if not name.startswith("_")]
