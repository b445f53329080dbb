"""Importance weights between the learned reverse transition and the forward posterior.

The raw weight compares log p_theta(x_{t-1} | x_t) with log q(x_{t-1} | x_t, x0)
at one x_{t-1} drawn from q. The log-ratio is divided by the sample dimension
before exponentiating, so weights of different dimensions are comparable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.diffusion.denoiser import Conditions, DenoiserNet
from src.diffusion.schedule import NoiseSchedule, Timestep
from src.diffusion.transitions import (
    gaussian_log_density,
    model_reverse_params,
    posterior_params,
    sample_gaussian,
)
from src.numerics.arrays import DenseArray, require_same_shape
from src.utils.errors import ArgumentError, NonFiniteError

LOG_RATIO_LIMIT = 700.0

WEIGHT_COLUMNS = ("run_id", "step", "t", "raw", "clipped", "log_p_model", "log_q_forward")


class ClipConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epsilon: float = Field(0.2, gt=0.0, lt=1.0)
    detach_weight: bool = True

    @field_validator("detach_weight")
    @classmethod
    def _only_detached(cls, v: bool) -> bool:
        if not v:
            raise ValueError("weights are always treated as constants in the gradient; detach_weight must be true")
        return v

    @property
    def lo(self) -> float:
        return 1.0 - self.epsilon

    @property
    def hi(self) -> float:
        return 1.0 + self.epsilon


@dataclass(frozen=True)
class StepWeight:
    t: int
    raw: float
    clipped: float
    log_p_model: float
    log_q_forward: float


@dataclass
class WeightReport:
    """Per-sample weights of one training step (or one diagnostics sweep)."""
    t: np.ndarray
    raw: DenseArray
    clipped: DenseArray
    log_p_model: DenseArray
    log_q_forward: DenseArray

    def __len__(self) -> int:
        return int(self.raw.size)

    def step(self, i: int) -> StepWeight:
        return StepWeight(
            t=int(self.t[i]),
            raw=float(self.raw[i]),
            clipped=float(self.clipped[i]),
            log_p_model=float(self.log_p_model[i]),
            log_q_forward=float(self.log_q_forward[i]),
        )

    def steps(self) -> List[StepWeight]:
        return [self.step(i) for i in range(len(self))]

    @classmethod
    def concat(cls, reports: Sequence["WeightReport"]) -> "WeightReport":
        return cls(
            t=np.concatenate([r.t for r in reports]),
            raw=np.concatenate([r.raw for r in reports]),
            clipped=np.concatenate([r.clipped for r in reports]),
            log_p_model=np.concatenate([r.log_p_model for r in reports]),
            log_q_forward=np.concatenate([r.log_q_forward for r in reports]),
        )

    def csv_row(self, run_id: str, step: int) -> Dict[str, Any]:
        """Batch means, in WEIGHT_COLUMNS order. ``t`` is the step's (shared) timestep."""
        return {
            "run_id": run_id,
            "step": int(step),
            "t": int(self.t[0]),
            "raw": float(np.mean(self.raw)),
            "clipped": float(np.mean(self.clipped)),
            "log_p_model": float(np.mean(self.log_p_model)),
            "log_q_forward": float(np.mean(self.log_q_forward)),
        }

    def as_details(self) -> Dict[str, Any]:
        return {
            "t": self.t.tolist(),
            "raw": self.raw.tolist(),
            "clipped": self.clipped.tolist(),
            "log_p_model": self.log_p_model.tolist(),
            "log_q_forward": self.log_q_forward.tolist(),
        }


def _check_positive(w: Any, what: str) -> DenseArray:
    arr = np.asarray(w, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ArgumentError(f"{what}: weights must be positive and finite, got {w}")
    return arr


def clip_weight(w: float, cfg: ClipConfig) -> float:
    _check_positive(w, "clip_weight")
    return min(max(float(w), cfg.lo), cfg.hi)


def clip_weights(w: DenseArray, cfg: ClipConfig) -> DenseArray:
    return np.clip(_check_positive(w, "clip_weights"), cfg.lo, cfg.hi)


def pair_inverse_weight(w_w: float, w_l: float, cfg: ClipConfig) -> float:
    """max(clip(1/w_w), clip(1/w_l)): the shared scale of a pair's logit."""
    _check_positive([w_w, w_l], "pair_inverse_weight")
    return max(clip_weight(1.0 / w_w, cfg), clip_weight(1.0 / w_l, cfg))


def pair_inverse_weights(w_w: DenseArray, w_l: DenseArray, cfg: ClipConfig) -> DenseArray:
    ww = _check_positive(w_w, "pair_inverse_weights")
    wl = _check_positive(w_l, "pair_inverse_weights")
    require_same_shape(ww, wl, what="pair_inverse_weights")
    return np.maximum(np.clip(1.0 / ww, cfg.lo, cfg.hi), np.clip(1.0 / wl, cfg.lo, cfg.hi))


def draw_posterior_point(
    x0: DenseArray,
    x_t: DenseArray,
    t: Timestep,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> DenseArray:
    """One x_{t-1} ~ q(. | x_t, x0) per row."""
    return sample_gaussian(posterior_params(x0, x_t, t, sched), rng)


def importance_weights(
    net: DenoiserNet,
    x0: DenseArray,
    x_t: DenseArray,
    t: Timestep,
    c: Conditions,
    sched: NoiseSchedule,
    rng: Optional[np.random.Generator] = None,
    clip: Optional[ClipConfig] = None,
    old_net: Optional[DenoiserNet] = None,
    x_prev: Optional[DenseArray] = None,
) -> WeightReport:
    """Batched importance weights, one per row of ``x0``.

    ``x_prev`` fixes the evaluation point; otherwise it is drawn from the
    forward posterior with ``rng``. With ``old_net`` the denominator is the
    old policy's reverse transition instead of the forward posterior.
    """
    clip = clip or ClipConfig()
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    require_same_shape(x0, x_t, what="importance_weights")
    n, dim = x0.shape
    steps = np.broadcast_to(sched.steps(t, lo=2), (n,)).copy()

    if x_prev is None:
        if rng is None:
            raise ArgumentError("importance_weights: need rng or x_prev")
        x_prev = draw_posterior_point(x0, x_t, steps, sched, rng)
    x_prev = np.atleast_2d(np.asarray(x_prev, dtype=np.float64))
    require_same_shape(x0, x_prev, what="importance_weights")

    log_p = np.asarray(gaussian_log_density(x_prev, model_reverse_params(net, x_t, steps, c, sched)))
    if old_net is None:
        log_q = np.asarray(gaussian_log_density(x_prev, posterior_params(x0, x_t, steps, sched)))
    else:
        log_q = np.asarray(gaussian_log_density(x_prev, model_reverse_params(old_net, x_t, steps, c, sched)))

    if not (np.all(np.isfinite(log_p)) and np.all(np.isfinite(log_q))):
        raise NonFiniteError(
            "importance weight: non-finite transition log-density",
            {"t": steps.tolist(), "log_p_model": log_p.tolist(), "log_q_forward": log_q.tolist()},
        )
    log_ratio = np.clip((log_p - log_q) / dim, -LOG_RATIO_LIMIT, LOG_RATIO_LIMIT)
    raw = np.exp(log_ratio)
    return WeightReport(
        t=steps,
        raw=raw,
        clipped=np.clip(raw, clip.lo, clip.hi),
        log_p_model=log_p,
        log_q_forward=log_q,
    )


def importance_weight(
    net: DenoiserNet,
    x0: DenseArray,
    x_t: DenseArray,
    t: int,
    c: int,
    sched: NoiseSchedule,
    rng: Optional[np.random.Generator] = None,
    clip: Optional[ClipConfig] = None,
    old_net: Optional[DenoiserNet] = None,
    x_prev: Optional[DenseArray] = None,
) -> StepWeight:
    """Single-sample importance weight w(t) for x0, x_t of shape (dim,)."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1:
        raise ArgumentError(f"importance_weight takes one sample, got shape {x0.shape}; use importance_weights")
    report = importance_weights(
        net,
        x0[None, :],
        np.asarray(x_t, dtype=np.float64)[None, :],
        t,
        c,
        sched,
        rng=rng,
        clip=clip,
        old_net=old_net,
        x_prev=None if x_prev is None else np.asarray(x_prev, dtype=np.float64)[None, :],
    )
    return report.step(0)


def is_identity_check(p: Sequence[float], q: Sequence[float], f: Sequence[float]) -> Tuple[float, float]:
    """Both sides of E_p[f] = E_q[f p/q] by exact enumeration over a finite support."""
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64)
    f_arr = np.asarray(f, dtype=np.float64)
    if not (p_arr.shape == q_arr.shape == f_arr.shape) or p_arr.ndim != 1:
        raise ArgumentError(f"is_identity_check: p, q, f must be 1-D and aligned, got {p_arr.shape}, {q_arr.shape}, {f_arr.shape}")
    if np.any(p_arr < 0) or np.any(q_arr < 0):
        raise ArgumentError("is_identity_check: probabilities must be non-negative")
    uncovered = (p_arr > 0) & (q_arr <= 0)
    if np.any(uncovered):
        raise ArgumentError(f"is_identity_check: q has no mass at support points {np.flatnonzero(uncovered).tolist()}")
    lhs = math.fsum(float(pi * fi) for pi, fi in zip(p_arr, f_arr))
    rhs = math.fsum(float(qi * fi * (pi / qi)) for pi, qi, fi in zip(p_arr, q_arr, f_arr) if qi > 0)
    return lhs, rhs
