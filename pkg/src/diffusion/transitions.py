"""Forward noising, forward posterior, model reverse transition and Gaussian log-densities.

Every helper takes ``t`` as a scalar step or as one step per row of a batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from src.diffusion.denoiser import Conditions, DenoiserNet
from src.diffusion.schedule import NoiseSchedule, Timestep
from src.numerics.arrays import DenseArray, require_same_shape
from src.utils.errors import ArgumentError

Scalarish = Union[float, DenseArray]


@dataclass(frozen=True)
class GaussianParams:
    """Isotropic Gaussian: ``variance`` is a scalar, or one variance per batch row."""
    mean: DenseArray
    variance: Scalarish


def _per_row(values: DenseArray, like: DenseArray) -> Scalarish:
    """Lift per-step coefficients so they broadcast against a sample or a batch of samples."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return float(values)
    if like.ndim != 2 or values.shape[0] != like.shape[0]:
        raise ArgumentError(f"per-row timesteps {values.shape} do not match batch {like.shape}")
    return values[:, None]


def forward_diffuse(x0: DenseArray, t: Timestep, eps: DenseArray, sched: NoiseSchedule) -> DenseArray:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    require_same_shape(x0, eps, what="forward_diffuse")
    ab = _per_row(sched.alpha_bar_t(t), x0)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def posterior_params(x0: DenseArray, x_t: DenseArray, t: Timestep, sched: NoiseSchedule) -> GaussianParams:
    """q(x_{t-1} | x_t, x0). At t=1 alpha_bar_0 := 1 and the variance sits at the 1e-12 floor."""
    x0 = np.asarray(x0, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    require_same_shape(x0, x_t, what="posterior_params")
    steps = sched.steps(t)
    beta = _per_row(sched.beta_t(steps), x0)
    alpha = _per_row(sched.alpha_t(steps), x0)
    ab = _per_row(sched.alpha_bar_t(steps), x0)
    ab_prev = _per_row(sched.alpha_bar_prev(steps), x0)
    mean = (np.sqrt(ab_prev) * beta * x0 + np.sqrt(alpha) * (1.0 - ab_prev) * x_t) / (1.0 - ab)
    return GaussianParams(mean=mean, variance=_variance(sched, steps))


def _variance(sched: NoiseSchedule, steps: np.ndarray) -> Scalarish:
    var = sched.posterior_variance(steps)
    return float(var) if np.ndim(var) == 0 else np.asarray(var, dtype=np.float64)


def reverse_mean_from_eps(x_t: DenseArray, t: Timestep, eps_pred: DenseArray, sched: NoiseSchedule) -> DenseArray:
    """(x_t - beta_t / sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_t)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    require_same_shape(x_t, eps_pred, what="reverse_mean_from_eps")
    beta = _per_row(sched.beta_t(t), x_t)
    alpha = _per_row(sched.alpha_t(t), x_t)
    ab = _per_row(sched.alpha_bar_t(t), x_t)
    return (x_t - beta / np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(alpha)


def model_reverse_params(
    net: DenoiserNet,
    x_t: DenseArray,
    t: Timestep,
    c: Conditions,
    sched: NoiseSchedule,
) -> GaussianParams:
    """p_theta(x_{t-1} | x_t) with the variance fixed to the posterior variance."""
    steps = sched.steps(t)
    eps_pred = net.predict(x_t, steps, c)
    return GaussianParams(mean=reverse_mean_from_eps(x_t, steps, eps_pred, sched), variance=_variance(sched, steps))


def gaussian_log_density(x: DenseArray, g: GaussianParams) -> Scalarish:
    """Sum over the last axis of -1/2 log(2 pi var) - (x - mu)^2 / (2 var)."""
    x = np.asarray(x, dtype=np.float64)
    require_same_shape(x, g.mean, what="gaussian_log_density")
    var = np.asarray(g.variance, dtype=np.float64)
    if np.any(var <= 0.0):
        raise ArgumentError(f"gaussian_log_density: variance must be positive, got {g.variance}")
    dim = x.shape[-1]
    if var.ndim == 1:
        if x.ndim != 2 or var.shape[0] != x.shape[0]:
            raise ArgumentError(f"per-row variances {var.shape} do not match batch {x.shape}")
        quad = np.sum((x - g.mean) ** 2, axis=-1) / (2.0 * var)
        return -0.5 * dim * np.log(2.0 * math.pi * var) - quad
    quad = np.sum((x - g.mean) ** 2, axis=-1) / (2.0 * float(var))
    out = -0.5 * dim * math.log(2.0 * math.pi * float(var)) - quad
    return float(out) if np.ndim(out) == 0 else out


def sample_gaussian(g: GaussianParams, rng: np.random.Generator) -> DenseArray:
    std = _per_row(np.sqrt(np.asarray(g.variance, dtype=np.float64)), g.mean)
    return g.mean + std * rng.standard_normal(g.mean.shape)
