"""Reward-tilted target distribution on a finite outcome set, built and inverted in log space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.numerics.arrays import DenseArray
from src.utils.errors import ArgumentError


@dataclass(frozen=True)
class TargetCheck:
    p_star: DenseArray
    log_z: float
    recovered_rewards: DenseArray
    shift: float
    support: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.p_star))

    def inversion_error(self, rewards: Sequence[float]) -> float:
        """Largest |recovered - r| over the reference support."""
        r = np.asarray(rewards, dtype=np.float64)
        if not np.any(self.support):
            return 0.0
        return float(np.max(np.abs(self.recovered_rewards[self.support] - r[self.support])))


def target_distribution_check(
    ref_probs: Sequence[float],
    rewards: Sequence[float],
    w: float,
    beta: float,
    epsilon: float = 0.0,
) -> TargetCheck:
    """p*(x) = ref(x) exp((w / beta) r(x)) / Z with Z = sum ref(x) exp(((1 + epsilon) / beta) r(x)).

    The numerator uses ``w`` and the partition function uses the fixed
    exponent (1 + epsilon) / beta, so p* sums to 1 only when w == 1 + epsilon.
    The inversion r = (beta / w) log(p* / ref) + (beta / w) log Z is evaluated
    from log p* and returned with its shift (beta / w) log Z.
    """
    ref = np.asarray(ref_probs, dtype=np.float64)
    r = np.asarray(rewards, dtype=np.float64)
    if ref.ndim != 1 or ref.shape != r.shape:
        raise ArgumentError(f"target_distribution_check: ref {ref.shape} and rewards {r.shape} must be aligned 1-D")
    if np.any(ref < 0) or abs(float(np.sum(ref)) - 1.0) > 1e-12:
        raise ArgumentError(f"target_distribution_check: ref_probs must be a distribution, sums to {np.sum(ref)!r}")
    if w <= 0 or beta <= 0 or epsilon < 0:
        raise ArgumentError(f"target_distribution_check: need w > 0, beta > 0, epsilon >= 0, got ({w}, {beta}, {epsilon})")

    support = ref > 0
    log_ref = np.full(ref.shape, -np.inf)
    log_ref[support] = np.log(ref[support])
    log_z = float(np.logaddexp.reduce(log_ref[support] + ((1.0 + epsilon) / beta) * r[support]))
    log_p = log_ref + (w / beta) * r - log_z
    p_star = np.where(support, np.exp(log_p), 0.0)

    shift = (beta / w) * log_z
    recovered = np.full(ref.shape, np.nan)
    recovered[support] = (beta / w) * (log_p[support] - log_ref[support]) + shift
    return TargetCheck(p_star=p_star, log_z=log_z, recovered_rewards=recovered, shift=shift, support=support)
