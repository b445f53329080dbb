"""Conditional Gaussian-mixture target and the reward oracle ranking samples against it."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np

from src.diffusion.training import BatchSource
from src.experiments.config import TargetConfig
from src.numerics.arrays import DenseArray
from src.utils.errors import ArgumentError

ConditionArg = Union[int, np.ndarray]


@dataclass(frozen=True)
class ToyTarget:
    """Isotropic Gaussian mixture with a designated mode per condition.

    A conditional draw comes from the condition's designated mode with
    probability ``condition_fidelity`` and from the whole mixture otherwise,
    so the conditional data leave room for preference alignment to move mass.
    """
    means: DenseArray  # (k, dim)
    scale: float
    weights: DenseArray  # (k,)
    condition_map: Tuple[int, ...]
    condition_fidelity: float = 0.5

    def __post_init__(self) -> None:
        if self.means.ndim != 2 or self.weights.shape != (self.means.shape[0],):
            raise ArgumentError(f"ToyTarget: means {self.means.shape} and weights {self.weights.shape} disagree")
        if np.any(self.weights <= 0) or abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ArgumentError("ToyTarget: mixture weights must be positive and sum to 1")
        if any(not 0 <= k < self.n_modes for k in self.condition_map):
            raise ArgumentError("ToyTarget: condition_map points outside the modes")
        if not 0.0 <= self.condition_fidelity <= 1.0:
            raise ArgumentError("ToyTarget: condition_fidelity must lie in [0, 1]")

    @classmethod
    def from_config(cls, cfg: TargetConfig) -> "ToyTarget":
        means = np.asarray(cfg.means, dtype=np.float64)
        k = means.shape[0]
        weights = np.full(k, 1.0 / k) if cfg.weights is None else np.asarray(cfg.weights, dtype=np.float64)
        weights = weights / np.sum(weights)
        cmap = tuple(cfg.condition_map) if cfg.condition_map is not None else tuple(range(k))
        return cls(
            means=means,
            scale=cfg.scale,
            weights=weights,
            condition_map=cmap,
            condition_fidelity=cfg.condition_fidelity,
        )

    @property
    def n_modes(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def n_conditions(self) -> int:
        return len(self.condition_map)

    def _conditions(self, c: ConditionArg, n: int) -> np.ndarray:
        arr = np.broadcast_to(np.asarray(c, dtype=np.int64), (n,))
        if np.any(arr < 0) or np.any(arr >= self.n_conditions):
            raise ArgumentError(f"unknown condition in {np.unique(arr).tolist()}; known: 0..{self.n_conditions - 1}")
        return arr

    def designated_mean(self, c: ConditionArg) -> DenseArray:
        arr = np.asarray(c, dtype=np.int64)
        cs = self._conditions(arr, arr.size).reshape(arr.shape)
        modes = np.asarray(self.condition_map, dtype=np.int64)[cs]
        return self.means[modes]

    def sample(self, n: int, rng: np.random.Generator, c: Optional[ConditionArg] = None) -> DenseArray:
        """Unconditional mixture draws, or conditional draws when ``c`` is given."""
        modes = rng.choice(self.n_modes, size=n, p=self.weights)
        if c is not None:
            cs = self._conditions(c, n)
            keep = rng.random(n) < self.condition_fidelity
            modes = np.where(keep, np.asarray(self.condition_map, dtype=np.int64)[cs], modes)
        return self.means[modes] + self.scale * rng.standard_normal((n, self.dim))

    def sample_mode(self, c: ConditionArg, n: int, rng: np.random.Generator) -> DenseArray:
        """Draws from each condition's designated mode only."""
        cs = self._conditions(c, n)
        return self.designated_mean(cs) + self.scale * rng.standard_normal((n, self.dim))

    def rescaled(self, factor: float) -> "ToyTarget":
        """The same mixture with every mode mean multiplied by ``factor``."""
        if factor <= 0:
            raise ArgumentError(f"rescaled needs a positive factor, got {factor}")
        return replace(self, means=self.means * float(factor))

    def source(self) -> BatchSource:
        """Pretraining batches: uniform conditions, conditional draws."""

        def draw(n: int, rng: np.random.Generator) -> Tuple[DenseArray, np.ndarray]:
            c = rng.integers(0, self.n_conditions, size=n)
            return self.sample(n, rng, c), c

        return draw


def reward_oracle(target: ToyTarget, c: ConditionArg, x0: DenseArray) -> Union[float, DenseArray]:
    """-||x0 - designated mode mean||^2; one value per row for a batch."""
    x = np.asarray(x0, dtype=np.float64)
    if x.shape[-1] != target.dim:
        raise ArgumentError(f"reward_oracle: sample dimension {x.shape[-1]} != target dimension {target.dim}")
    mean = target.designated_mean(c)
    r = -np.sum((x - mean) ** 2, axis=-1)
    return float(r) if np.ndim(r) == 0 else r
