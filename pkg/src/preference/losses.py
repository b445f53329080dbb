"""Preference objectives over single-step reverse transitions.

Graph builders (``*_node`` / ``*_logit``) take the policy bound as tracked
parameters and the reference net as plain numbers, so gradients only reach the
policy. The float-returning functions evaluate the same graphs without
tracking. Every loss is the batch mean of -log sigmoid(logit).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.diffusion.denoiser import BoundDenoiser, DenoiserNet
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.transitions import (
    forward_diffuse,
    gaussian_log_density,
    model_reverse_params,
    posterior_params,
)
from src.numerics.arrays import DenseArray
from src.numerics.graph import CompGraph, Node
from src.preference.weights import (
    ClipConfig,
    WeightReport,
    draw_posterior_point,
    importance_weights,
    pair_inverse_weights,
)
from src.utils.errors import ArgumentError

Method = Literal["dpo", "cm", "sdpo"]
METHODS: Tuple[str, ...] = ("dpo", "cm", "sdpo")
DEFAULT_BETA = {"dpo": 2.0, "cm": 0.02, "sdpo": 0.02}


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    beta: Optional[float] = Field(None, gt=0.0)
    omega_mode: Literal["constant"] = "constant"
    clip: ClipConfig = Field(default_factory=ClipConfig)
    hard_mask_threshold: Optional[float] = Field(None, gt=0.0)
    timestep_window: Optional[Tuple[int, int]] = None
    weight_path: Literal["winner", "loser", "pair_max"] = "winner"
    eval_point: Literal["sample", "mean"] = "mean"

    @field_validator("timestep_window")
    @classmethod
    def _ordered_window(cls, v: Optional[Tuple[int, int]]) -> Optional[Tuple[int, int]]:
        if v is not None and not (1 <= v[0] < v[1]):
            raise ValueError(f"timestep_window needs 1 <= t_lo < t_hi, got {list(v)}")
        return v

    def beta_for(self, method: str) -> float:
        """Explicit beta if set, else the method's default (2.0 for dpo, 0.02 otherwise)."""
        if self.beta is not None:
            return self.beta
        if method not in DEFAULT_BETA:
            raise ArgumentError(f"unknown method {method!r}; expected one of {METHODS}")
        return DEFAULT_BETA[method]


@dataclass(frozen=True)
class PrefBatchStep:
    """A minibatch of preference pairs sharing one timestep ``t``.

    Rows are pairs; ``x_prev_*`` are x_{t-1} draws from the forward posterior,
    the evaluation points for transition densities and importance weights.
    """
    c: np.ndarray
    t: int
    x0_w: DenseArray
    eps_w: DenseArray
    x_t_w: DenseArray
    x0_l: DenseArray
    eps_l: DenseArray
    x_t_l: DenseArray
    x_prev_w: DenseArray
    x_prev_l: DenseArray

    def __post_init__(self) -> None:
        shape = self.x0_w.shape
        for name in ("eps_w", "x_t_w", "x0_l", "eps_l", "x_t_l", "x_prev_w", "x_prev_l"):
            if getattr(self, name).shape != shape:
                raise ArgumentError(f"PrefBatchStep: {name} shape {getattr(self, name).shape} != {shape}")
        if len(shape) != 2 or self.c.shape != (shape[0],):
            raise ArgumentError(f"PrefBatchStep: need (n, dim) samples and n conditions, got {shape} and {self.c.shape}")

    @property
    def size(self) -> int:
        return int(self.x0_w.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x0_w.shape[1])

    @classmethod
    def build(
        cls,
        c: np.ndarray,
        x0_w: DenseArray,
        x0_l: DenseArray,
        t: int,
        sched: NoiseSchedule,
        rng: np.random.Generator,
    ) -> "PrefBatchStep":
        """Noise both sides to step ``t`` and draw their x_{t-1} evaluation points."""
        x0_w = np.atleast_2d(np.asarray(x0_w, dtype=np.float64))
        x0_l = np.atleast_2d(np.asarray(x0_l, dtype=np.float64))
        t = int(sched.steps(t, lo=2))
        eps_w = rng.standard_normal(x0_w.shape)
        eps_l = rng.standard_normal(x0_l.shape)
        x_t_w = forward_diffuse(x0_w, t, eps_w, sched)
        x_t_l = forward_diffuse(x0_l, t, eps_l, sched)
        return cls(
            c=np.atleast_1d(np.asarray(c, dtype=np.int64)),
            t=t,
            x0_w=x0_w,
            eps_w=eps_w,
            x_t_w=x_t_w,
            x0_l=x0_l,
            eps_l=eps_l,
            x_t_l=x_t_l,
            x_prev_w=draw_posterior_point(x0_w, x_t_w, t, sched, rng),
            x_prev_l=draw_posterior_point(x0_l, x_t_l, t, sched, rng),
        )

    def swapped(self) -> "PrefBatchStep":
        return PrefBatchStep(
            c=self.c,
            t=self.t,
            x0_w=self.x0_l,
            eps_w=self.eps_l,
            x_t_w=self.x_t_l,
            x0_l=self.x0_w,
            eps_l=self.eps_w,
            x_t_l=self.x_t_w,
            x_prev_w=self.x_prev_l,
            x_prev_l=self.x_prev_w,
        )


def _neg_log_sigmoid_mean(graph: CompGraph, logit: Node) -> Node:
    return -graph.mean(graph.log_sigmoid(logit))


def _weighted_neg_log_sigmoid_mean(graph: CompGraph, logit: Node, multiplier: DenseArray) -> Node:
    per_pair = -graph.log_sigmoid(logit)
    return graph.mean(graph.mul(per_pair, graph.constant(np.broadcast_to(multiplier, per_pair.shape))))


def _softplus_neg(z: DenseArray) -> DenseArray:
    return np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


# --- Bradley-Terry and the sequence-level loss on abstract log-probabilities ---

def bt_reward_loss(r_w: float, r_l: float) -> float:
    """-log sigmoid(r_w - r_l)."""
    return float(_softplus_neg(float(r_w) - float(r_l)))


def bt_reward_loss_node(graph: CompGraph, r_w: Node, r_l: Node) -> Node:
    return _neg_log_sigmoid_mean(graph, r_w - r_l)


def sdpo_sequence_loss(
    logp_w: float,
    logp_l: float,
    ref_logp_w: float,
    ref_logp_l: float,
    w_tilde: float,
    beta: float,
) -> float:
    """-log sigmoid((beta / w_tilde) * [(logp_w - ref_logp_w) - (logp_l - ref_logp_l)])."""
    if w_tilde <= 0:
        raise ArgumentError(f"sdpo_sequence_loss: w_tilde must be positive, got {w_tilde}")
    logit = (beta / w_tilde) * ((logp_w - ref_logp_w) - (logp_l - ref_logp_l))
    return float(_softplus_neg(logit))


def sdpo_sequence_loss_node(
    graph: CompGraph,
    logp_w: Node,
    logp_l: Node,
    ref_logp_w: DenseArray,
    ref_logp_l: DenseArray,
    w_tilde: DenseArray,
    beta: float,
) -> Node:
    w_tilde = np.broadcast_to(np.asarray(w_tilde, dtype=np.float64), logp_w.shape)
    if np.any(w_tilde <= 0):
        raise ArgumentError("sdpo_sequence_loss_node: w_tilde must be positive")
    score = (logp_w - graph.constant(np.broadcast_to(ref_logp_w, logp_w.shape))) - (
        logp_l - graph.constant(np.broadcast_to(ref_logp_l, logp_l.shape))
    )
    logit = graph.mul(score, graph.constant(beta / w_tilde))
    return _neg_log_sigmoid_mean(graph, logit)


# --- epsilon-residual form ---

def _residual_sq(bound: BoundDenoiser, x_t: DenseArray, t: int, c: np.ndarray, eps: DenseArray) -> Node:
    g = bound.graph
    return g.sum(g.square(g.constant(eps) - bound.eps(x_t, t, c)), axis=-1)


def _ref_residual_sq(ref_net: DenoiserNet, x_t: DenseArray, t: int, c: np.ndarray, eps: DenseArray) -> DenseArray:
    return np.sum((eps - ref_net.predict(x_t, t, c)) ** 2, axis=-1)


def delta_ell_node(theta: BoundDenoiser, ref_net: DenoiserNet, batch: PrefBatchStep) -> Node:
    """Per-pair [winner residual gap] - [loser residual gap], shape (n,)."""
    g = theta.graph
    ref_w = _ref_residual_sq(ref_net, batch.x_t_w, batch.t, batch.c, batch.eps_w)
    ref_l = _ref_residual_sq(ref_net, batch.x_t_l, batch.t, batch.c, batch.eps_l)
    win = _residual_sq(theta, batch.x_t_w, batch.t, batch.c, batch.eps_w) - g.constant(ref_w)
    lose = _residual_sq(theta, batch.x_t_l, batch.t, batch.c, batch.eps_l) - g.constant(ref_l)
    return win - lose


def delta_ell(net: DenoiserNet, ref_net: DenoiserNet, batch: PrefBatchStep) -> DenseArray:
    return delta_ell_node(net.bind(CompGraph(), tracked=False), ref_net, batch).numpy()


def diffusion_dpo_logit(
    theta: BoundDenoiser,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    beta: float,
    sched: NoiseSchedule,
) -> Node:
    """-beta * T * omega * delta_ell with omega == 1."""
    return delta_ell_node(theta, ref_net, batch) * (-beta * sched.T)


def diffusion_dpo_loss_node(
    theta: BoundDenoiser,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
) -> Node:
    logit = diffusion_dpo_logit(theta, ref_net, batch, cfg.beta_for("dpo"), sched)
    return _neg_log_sigmoid_mean(theta.graph, logit)


def diffusion_dpo_loss(
    net: DenoiserNet,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
) -> float:
    return diffusion_dpo_loss_node(net.bind(CompGraph(), tracked=False), ref_net, batch, cfg, sched).item()


def cm_step_weights(
    net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
) -> Tuple[DenseArray, WeightReport]:
    """Effective per-pair multipliers for DPO-C&M and the report they came from.

    The weight follows ``cfg.weight_path``; with a hard mask, pairs whose raw
    weight falls below the threshold get multiplier 0.
    """
    report_w = importance_weights(net, batch.x0_w, batch.x_t_w, batch.t, batch.c, sched, clip=cfg.clip, x_prev=batch.x_prev_w)
    if cfg.weight_path == "winner":
        report, raw = report_w, report_w.raw
    else:
        report_l = importance_weights(net, batch.x0_l, batch.x_t_l, batch.t, batch.c, sched, clip=cfg.clip, x_prev=batch.x_prev_l)
        report = WeightReport.concat([report_w, report_l])
        raw = report_l.raw if cfg.weight_path == "loser" else np.maximum(report_w.raw, report_l.raw)
    multiplier = np.clip(raw, cfg.clip.lo, cfg.clip.hi)
    if cfg.hard_mask_threshold is not None:
        multiplier = np.where(raw < cfg.hard_mask_threshold, 0.0, multiplier)
    return multiplier, report


def dpo_cm_loss_node(
    theta: BoundDenoiser,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
    multiplier: DenseArray,
) -> Node:
    """Batch mean of multiplier * (-log sigmoid(logit)); the multiplier is a constant."""
    logit = diffusion_dpo_logit(theta, ref_net, batch, cfg.beta_for("cm"), sched)
    return _weighted_neg_log_sigmoid_mean(theta.graph, logit, multiplier)


def dpo_cm_loss(
    net: DenoiserNet,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
    multiplier: Optional[DenseArray] = None,
) -> float:
    """With ``multiplier`` omitted it is computed from ``net`` via cm_step_weights."""
    if multiplier is None:
        multiplier, _ = cm_step_weights(net, batch, cfg, sched)
    return dpo_cm_loss_node(net.bind(CompGraph(), tracked=False), ref_net, batch, cfg, sched, multiplier).item()


# --- transition-density form ---

def reverse_log_density_node(
    theta: BoundDenoiser,
    x_t: DenseArray,
    x_prev: DenseArray,
    t: int,
    c: np.ndarray,
    sched: NoiseSchedule,
) -> Node:
    """log p_theta(x_prev | x_t) per row as a graph node, variance fixed to the posterior variance."""
    g = theta.graph
    beta_t = float(sched.beta_t(t))
    alpha_t = float(sched.alpha_t(t))
    ab = float(sched.alpha_bar_t(t))
    var = float(sched.posterior_variance(t))
    dim = x_t.shape[1]
    # x_prev - mean = (x_prev - x_t / sqrt(alpha)) + k * eps_theta
    k = beta_t / math.sqrt(1.0 - ab) / math.sqrt(alpha_t)
    diff = g.constant(x_prev - x_t / math.sqrt(alpha_t)) + theta.eps(x_t, t, c) * k
    quad = g.sum(g.square(diff), axis=-1) * (-0.5 / var)
    return quad + g.constant(np.full(x_t.shape[0], -0.5 * dim * math.log(2.0 * math.pi * var)))


def sdpo_scale_factor(t: int, sched: NoiseSchedule) -> float:
    """lambda_t = beta_t^2 / (2 sigma_t^2 alpha_t (1 - alpha_bar_t)).

    At posterior-mean evaluation points the density-form log-ratio difference
    equals -lambda_t * delta_ell, so the SDPO logit is lambda_t / w_tilde
    times the Diffusion-DPO logit at equal beta.
    """
    beta_t = float(sched.beta_t(t))
    return beta_t**2 / (
        2.0 * float(sched.posterior_variance(t)) * float(sched.alpha_t(t)) * (1.0 - float(sched.alpha_bar_t(t)))
    )


def _eval_points(batch: PrefBatchStep, eval_point: str, sched: NoiseSchedule) -> Tuple[DenseArray, DenseArray]:
    if eval_point == "sample":
        return batch.x_prev_w, batch.x_prev_l
    if eval_point == "mean":
        return (
            posterior_params(batch.x0_w, batch.x_t_w, batch.t, sched).mean,
            posterior_params(batch.x0_l, batch.x_t_l, batch.t, sched).mean,
        )
    raise ArgumentError(f"eval_point must be 'sample' or 'mean', got {eval_point!r}")


def sdpo_weights(
    net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
) -> Tuple[DenseArray, WeightReport]:
    """Pair inverse weights from winner- and loser-path importance weights."""
    x_prev_w, x_prev_l = _eval_points(batch, cfg.eval_point, sched)
    report_w = importance_weights(net, batch.x0_w, batch.x_t_w, batch.t, batch.c, sched, clip=cfg.clip, x_prev=x_prev_w)
    report_l = importance_weights(net, batch.x0_l, batch.x_t_l, batch.t, batch.c, sched, clip=cfg.clip, x_prev=x_prev_l)
    w_tilde = pair_inverse_weights(report_w.raw, report_l.raw, cfg.clip)
    return w_tilde, WeightReport.concat([report_w, report_l])


def sdpo_diffusion_logit(
    theta: BoundDenoiser,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    beta: float,
    sched: NoiseSchedule,
    w_tilde: DenseArray,
    eval_point: str = "mean",
) -> Node:
    w_tilde = np.broadcast_to(np.asarray(w_tilde, dtype=np.float64), (batch.size,))
    if np.any(w_tilde <= 0):
        raise ArgumentError("sdpo_diffusion_logit: w_tilde must be positive")
    g = theta.graph
    x_prev_w, x_prev_l = _eval_points(batch, eval_point, sched)
    ref_w = np.asarray(gaussian_log_density(x_prev_w, model_reverse_params(ref_net, batch.x_t_w, batch.t, batch.c, sched)))
    ref_l = np.asarray(gaussian_log_density(x_prev_l, model_reverse_params(ref_net, batch.x_t_l, batch.t, batch.c, sched)))
    lp_w = reverse_log_density_node(theta, batch.x_t_w, x_prev_w, batch.t, batch.c, sched)
    lp_l = reverse_log_density_node(theta, batch.x_t_l, x_prev_l, batch.t, batch.c, sched)
    score = (lp_w - g.constant(np.reshape(ref_w, (batch.size,)))) - (lp_l - g.constant(np.reshape(ref_l, (batch.size,))))
    return g.mul(score, g.constant(beta * sched.T / w_tilde))


def sdpo_diffusion_loss_node(
    theta: BoundDenoiser,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
    w_tilde: DenseArray,
) -> Node:
    logit = sdpo_diffusion_logit(theta, ref_net, batch, cfg.beta_for("sdpo"), sched, w_tilde, cfg.eval_point)
    return _neg_log_sigmoid_mean(theta.graph, logit)


def sdpo_diffusion_loss(
    net: DenoiserNet,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
    w_tilde: Optional[DenseArray] = None,
) -> float:
    """With ``w_tilde`` omitted it is computed from ``net`` via sdpo_weights."""
    if w_tilde is None:
        w_tilde, _ = sdpo_weights(net, batch, cfg, sched)
    return sdpo_diffusion_loss_node(net.bind(CompGraph(), tracked=False), ref_net, batch, cfg, sched, w_tilde).item()


@dataclass
class StepResult:
    loss: Node
    logit: DenseArray
    w_tilde: DenseArray
    report: WeightReport


def preference_step(
    method: str,
    theta: BoundDenoiser,
    ref_net: DenoiserNet,
    batch: PrefBatchStep,
    cfg: LossConfig,
    sched: NoiseSchedule,
) -> StepResult:
    """Build one method's loss graph. Weights always come from the current policy, as constants."""
    beta = cfg.beta_for(method)
    g = theta.graph
    if method == "dpo":
        report = importance_weights(
            theta.net, batch.x0_w, batch.x_t_w, batch.t, batch.c, sched, clip=cfg.clip, x_prev=batch.x_prev_w
        )
        logit = diffusion_dpo_logit(theta, ref_net, batch, beta, sched)
        loss = _neg_log_sigmoid_mean(g, logit)
        w_tilde = np.ones(batch.size)
    elif method == "cm":
        w_tilde, report = cm_step_weights(theta.net, batch, cfg, sched)
        logit = diffusion_dpo_logit(theta, ref_net, batch, beta, sched)
        loss = _weighted_neg_log_sigmoid_mean(g, logit, w_tilde)
    elif method == "sdpo":
        w_tilde, report = sdpo_weights(theta.net, batch, cfg, sched)
        logit = sdpo_diffusion_logit(theta, ref_net, batch, beta, sched, w_tilde, cfg.eval_point)
        loss = _neg_log_sigmoid_mean(g, logit)
    else:
        raise ArgumentError(f"unknown method {method!r}; expected one of {METHODS}")
    return StepResult(loss=loss, logit=logit.numpy(), w_tilde=np.asarray(w_tilde, dtype=np.float64), report=report)
