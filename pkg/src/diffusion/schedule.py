from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from src.numerics.arrays import DenseArray
from src.utils.errors import ArgumentError

Timestep = Union[int, np.integer, np.ndarray]

POSTERIOR_VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step DDPM coefficients. Timesteps are 1-based; arrays are indexed t-1."""
    beta: DenseArray
    alpha: DenseArray
    alpha_bar: DenseArray

    @classmethod
    def from_betas(cls, betas: Sequence[float]) -> "NoiseSchedule":
        beta = np.asarray(betas, dtype=np.float64).copy()
        if beta.ndim != 1 or beta.size < 2:
            raise ArgumentError(f"schedule needs at least 2 steps, got {beta.size}")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise ArgumentError("every beta_t must lie in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        for arr in (beta, alpha, alpha_bar):
            arr.setflags(write=False)
        return cls(beta=beta, alpha=alpha, alpha_bar=alpha_bar)

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def steps(self, t: Timestep, lo: int = 1) -> np.ndarray:
        """Validate t (scalar or array) against [lo, T] and return it as an int array."""
        arr = np.asarray(t)
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.equal(np.mod(arr, 1), 0)):
                raise ArgumentError(f"timesteps must be integers, got {t!r}")
            arr = arr.astype(np.int64)
        if np.any(arr < lo) or np.any(arr > self.T):
            raise ArgumentError(f"timestep out of range [{lo}, {self.T}]: {t!r}")
        return arr

    def beta_t(self, t: Timestep) -> DenseArray:
        return self.beta[self.steps(t) - 1]

    def alpha_t(self, t: Timestep) -> DenseArray:
        return self.alpha[self.steps(t) - 1]

    def alpha_bar_t(self, t: Timestep) -> DenseArray:
        return self.alpha_bar[self.steps(t) - 1]

    def alpha_bar_prev(self, t: Timestep) -> DenseArray:
        """alpha_bar_{t-1}, with alpha_bar_0 := 1."""
        idx = self.steps(t) - 2
        return np.where(idx >= 0, self.alpha_bar[np.maximum(idx, 0)], 1.0)

    def posterior_variance(self, t: Timestep) -> DenseArray:
        var = self.beta_t(t) * (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bar_t(t))
        return np.maximum(var, POSTERIOR_VARIANCE_FLOOR)

    def as_dict(self) -> dict:
        return {"T": self.T, "beta_first": float(self.beta[0]), "beta_last": float(self.beta[-1])}


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end over T steps."""
    if int(T) != T or T < 2:
        raise ArgumentError(f"T must be an integer >= 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ArgumentError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, int(T)))


def window_bounds(sched: NoiseSchedule, lo_frac: float, hi_frac: float) -> Tuple[int, int]:
    """Integer timestep interval [ceil(lo_frac*T), floor(hi_frac*T)], clamped to [1, T]."""
    lo = max(1, int(np.ceil(lo_frac * sched.T)))
    hi = min(sched.T, int(np.floor(hi_frac * sched.T)))
    return lo, hi
