from __future__ import annotations

from typing import Optional

import numpy as np

from src.diffusion.denoiser import Conditions, DenoiserNet
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.transitions import reverse_mean_from_eps
from src.numerics.arrays import DenseArray, require_finite
from src.utils.errors import ArgumentError


def ddpm_sample(
    net: DenoiserNet,
    c: Conditions,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    n: int = 1,
    x_T: Optional[DenseArray] = None,
) -> DenseArray:
    """Ancestral sampling t = T..1; returns an (n, dim) batch of x0 draws.

    ``c`` is one condition for the whole batch or one per row. The last step
    (t = 1) returns the model mean without noise.
    """
    dim = net.config.dim
    if x_T is None:
        if n < 1:
            raise ArgumentError(f"ddpm_sample: n must be >= 1, got {n}")
        x = rng.standard_normal((n, dim))
    else:
        x = np.array(x_T, dtype=np.float64, ndmin=2)
        if x.shape[1] != dim:
            raise ArgumentError(f"ddpm_sample: x_T must have {dim} columns, got {x.shape}")
    for t in range(sched.T, 0, -1):
        eps_pred = net.predict(x, t, c)
        mean = reverse_mean_from_eps(x, t, eps_pred, sched)
        if t > 1:
            x = mean + np.sqrt(float(sched.posterior_variance(t))) * rng.standard_normal(x.shape)
        else:
            x = mean
    return require_finite(x, name="ddpm_sample")
