from src.flow.sde import (
    DRIFT_FORMS,
    DenoiserField,
    InterpolantSchedule,
    SDEResult,
    as_field,
    closed_form_gaussian_denoiser,
    drift_field,
    em_step,
    flow_denoiser_config,
    sde_sample,
    train_denoiser,
)

__all__ = [
    "DRIFT_FORMS",
    "DenoiserField",
    "InterpolantSchedule",
    "SDEResult",
    "as_field",
    "closed_form_gaussian_denoiser",
    "drift_field",
    "em_step",
    "flow_denoiser_config",
    "sde_sample",
    "train_denoiser",
]
