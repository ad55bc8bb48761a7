"""Variational inference engine for deep Wishart process regression."""

from .engine import (
    AdamState,
    ELBOReport,
    PredictResult,
    TrainConfig,
    TrainRecord,
    adam_step,
    anneal_factor,
    elbo_estimate,
    elbo_single_sample,
    gradient,
    predict,
    train,
)
from .parameters import (
    FAMILIES,
    CheckpointData,
    ModelParams,
    ParameterLayout,
    init_params,
    inv_softplus,
    load_checkpoint,
    pack_lower_raw,
    save_checkpoint,
    softplus,
)

__all__ = [
    "AdamState",
    "CheckpointData",
    "ELBOReport",
    "FAMILIES",
    "ModelParams",
    "ParameterLayout",
    "PredictResult",
    "TrainConfig",
    "TrainRecord",
    "adam_step",
    "anneal_factor",
    "elbo_estimate",
    "elbo_single_sample",
    "gradient",
    "init_params",
    "inv_softplus",
    "load_checkpoint",
    "pack_lower_raw",
    "predict",
    "save_checkpoint",
    "softplus",
    "train",
]
