from src.diffusion.denoiser import BoundDenoiser, DenoiserConfig, DenoiserNet, timestep_embedding
from src.diffusion.sampling import ddpm_sample
from src.diffusion.schedule import NoiseSchedule, make_schedule
from src.diffusion.training import fit_denoiser, pretrain_loss, pretrain_loss_node
from src.diffusion.transitions import (
    GaussianParams,
    forward_diffuse,
    gaussian_log_density,
    model_reverse_params,
    posterior_params,
    reverse_mean_from_eps,
    sample_gaussian,
)

__all__ = [
    "BoundDenoiser",
    "DenoiserConfig",
    "DenoiserNet",
    "GaussianParams",
    "NoiseSchedule",
    "ddpm_sample",
    "fit_denoiser",
    "forward_diffuse",
    "gaussian_log_density",
    "make_schedule",
    "model_reverse_params",
    "posterior_params",
    "pretrain_loss",
    "pretrain_loss_node",
    "reverse_mean_from_eps",
    "sample_gaussian",
    "timestep_embedding",
]
