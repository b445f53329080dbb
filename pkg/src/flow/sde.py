"""Sampling a flow model stochastically: interpolant schedules, the SDE drift and Euler-Maruyama.

The interpolant is x_t = alpha(t) x_1 + beta(t) z with z ~ N(0, I), so t = 0
is noise and t = 1 is data. Time is clamped to [T_LO, T_HI] because the drift
divides by alpha(t) and beta(t).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np

from src.diffusion.denoiser import DenoiserConfig, DenoiserNet
from src.diffusion.training import pretrain_loss_node
from src.numerics.arrays import DenseArray
from src.numerics.graph import CompGraph
from src.numerics.optim import AdamState, adam_step
from src.utils.errors import ArgumentError, DomainError, NonFiniteError
from src.utils.logger import get_logger

T_LO = 1e-3
T_HI = 1.0 - 1e-3

DriftForm = Literal["printed", "beta_denominator", "interpolant"]
DRIFT_FORMS: Tuple[str, ...] = ("printed", "beta_denominator", "interpolant")

ScalarFn = Callable[[float], float]
# eta(t, x) ~ E[z | x_t = x]; x is (n, dim) and so is the result
DenoiserField = Callable[[float, DenseArray], DenseArray]


@dataclass(frozen=True)
class InterpolantSchedule:
    alpha: ScalarFn
    beta: ScalarFn
    alpha_dot: ScalarFn
    beta_dot: ScalarFn
    epsilon: ScalarFn

    def __post_init__(self) -> None:
        if abs(self.alpha(0.0)) > 1e-12 or abs(self.alpha(1.0) - 1.0) > 1e-12:
            raise ArgumentError("interpolant needs alpha(0) = 0 and alpha(1) = 1")
        if abs(self.beta(0.0) - 1.0) > 1e-12 or abs(self.beta(1.0)) > 1e-12:
            raise ArgumentError("interpolant needs beta(0) = 1 and beta(1) = 0")
        if any(self.epsilon(t) < 0 for t in np.linspace(0.0, 1.0, 11)):
            raise ArgumentError("epsilon(t) must be non-negative")

    @classmethod
    def linear(cls, epsilon: float = 0.0) -> "InterpolantSchedule":
        """alpha(t) = t, beta(t) = 1 - t, constant epsilon."""
        if epsilon < 0:
            raise ArgumentError(f"epsilon must be non-negative, got {epsilon}")
        eps = float(epsilon)
        return cls(
            alpha=lambda t: t,
            beta=lambda t: 1.0 - t,
            alpha_dot=lambda t: 1.0,
            beta_dot=lambda t: -1.0,
            epsilon=lambda t: eps,
        )


def drift_field(
    t: float,
    x: DenseArray,
    eta: DenoiserField,
    sched: InterpolantSchedule,
    form: str = "printed",
) -> DenseArray:
    """SDE drift built from the denoiser.

    printed:          alpha' eta + (beta'/beta)(x - alpha eta) - (eps/alpha) eta
    beta_denominator: same, last term divided by beta instead of alpha
    interpolant:      beta' eta + (alpha'/alpha)(x - beta eta) - (eps/beta) eta
    """
    a, b = sched.alpha(t), sched.beta(t)
    if not 0.0 < t < 1.0 or a == 0.0 or b == 0.0:
        raise DomainError(f"drift_field: alpha({t})={a}, beta({t})={b}; clamp t into (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    e = np.asarray(eta(t, x), dtype=np.float64)
    if e.shape != x.shape:
        raise ArgumentError(f"denoiser returned shape {e.shape} for input {x.shape}")
    ad, bd, eps = sched.alpha_dot(t), sched.beta_dot(t), sched.epsilon(t)
    if form == "printed":
        return ad * e + (bd / b) * (x - a * e) - (eps / a) * e
    if form == "beta_denominator":
        return ad * e + (bd / b) * (x - a * e) - (eps / b) * e
    if form == "interpolant":
        return bd * e + (ad / a) * (x - b * e) - (eps / b) * e
    raise ArgumentError(f"unknown drift form {form!r}; expected one of {DRIFT_FORMS}")


def em_step(x: DenseArray, t: float, dt: float, b: DenseArray, eps_t: float, xi: DenseArray) -> DenseArray:
    """x + b dt + sqrt(2 eps_t dt) xi."""
    if dt <= 0:
        raise ArgumentError(f"em_step: dt must be positive, got {dt}")
    if eps_t < 0:
        raise ArgumentError(f"em_step: eps_t must be non-negative, got {eps_t}")
    return np.asarray(x, dtype=np.float64) + np.asarray(b) * dt + np.sqrt(2.0 * eps_t * dt) * np.asarray(xi)


@dataclass
class SDEResult:
    x: DenseArray
    times: DenseArray
    paths: Optional[DenseArray] = None  # (n_steps + 1, n, dim)


def sde_sample(
    eta: DenoiserField,
    sched: InterpolantSchedule,
    n_steps: int,
    rng: np.random.Generator,
    n: int = 1,
    dim: int = 2,
    form: str = "printed",
    x_init: Optional[DenseArray] = None,
    record_paths: bool = False,
    t_lo: float = T_LO,
    t_hi: float = T_HI,
) -> SDEResult:
    """Integrate from x ~ N(0, I) at t_lo to t_hi on a uniform grid of ``n_steps`` steps."""
    if n_steps < 2:
        raise ArgumentError(f"sde_sample: n_steps must be >= 2, got {n_steps}")
    if not 0.0 < t_lo < t_hi < 1.0:
        raise ArgumentError(f"sde_sample: need 0 < t_lo < t_hi < 1, got ({t_lo}, {t_hi})")
    x = rng.standard_normal((n, dim)) if x_init is None else np.array(x_init, dtype=np.float64, ndmin=2)
    times = np.linspace(t_lo, t_hi, n_steps + 1)
    dt = (t_hi - t_lo) / n_steps
    trace: List[DenseArray] = [x.copy()] if record_paths else []
    for j in range(n_steps):
        t = float(times[j])
        b = drift_field(t, x, eta, sched, form)
        x = em_step(x, t, dt, b, sched.epsilon(t), rng.standard_normal(x.shape))
        if record_paths:
            trace.append(x.copy())
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("sde_sample: integration diverged", {"form": form, "n_steps": n_steps})
    return SDEResult(x=x, times=times, paths=np.stack(trace) if record_paths else None)


def closed_form_gaussian_denoiser(sched: InterpolantSchedule) -> DenoiserField:
    """E[z | x_t = x] when the data are N(0, I): beta x / (alpha^2 + beta^2)."""

    def eta(t: float, x: DenseArray) -> DenseArray:
        a, b = sched.alpha(t), sched.beta(t)
        return b * np.asarray(x, dtype=np.float64) / (a * a + b * b)

    return eta


def flow_denoiser_config(dim: int, hidden: int = 64, depth: int = 2) -> DenoiserConfig:
    """Unconditional net over continuous time in [0, 1] (embedding of 1000 t)."""
    return DenoiserConfig(dim=dim, hidden=hidden, depth=depth, n_conditions=1, time_scale=1000.0)


def as_field(net: DenoiserNet) -> DenoiserField:
    return lambda t, x: net.predict(x, t, 0)


def train_denoiser(
    eta_net: DenoiserNet,
    samples: DenseArray,
    sched: InterpolantSchedule,
    steps: int,
    rng: np.random.Generator,
    batch_size: int = 128,
    lr: float = 1e-3,
    log_every: int = 100,
) -> Tuple[DenoiserNet, List[float]]:
    """Regress eta(t, alpha x_1 + beta z) onto z with t ~ U[T_LO, T_HI] and x_1 drawn from ``samples``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[1] != eta_net.config.dim:
        raise ArgumentError(f"train_denoiser: samples have {samples.shape[1]} dims, net expects {eta_net.config.dim}")
    logger = get_logger("flow")
    state = AdamState(lr=lr)
    params = {k: v.copy() for k, v in eta_net.params.items()}
    history: List[float] = []
    for step in range(1, steps + 1):
        x1 = samples[rng.integers(0, samples.shape[0], size=batch_size)]
        t = rng.uniform(T_LO, T_HI, size=batch_size)
        z = rng.standard_normal(x1.shape)
        a = np.array([sched.alpha(float(s)) for s in t])[:, None]
        b = np.array([sched.beta(float(s)) for s in t])[:, None]
        x_t = a * x1 + b * z

        graph = CompGraph()
        nodes = {name: graph.param(name, value) for name, value in params.items()}
        loss = pretrain_loss_node(graph, eta_net, nodes, x_t, t, 0, z)
        grads = graph.backward(loss)
        params = adam_step(state, params, grads)
        history.append(loss.item())
        if log_every and step % log_every == 0:
            logger.info(f"denoiser step {step}/{steps} loss={np.mean(history[-log_every:]):.4f}")
    return eta_net.with_params(params), history
