"""epsilon-prediction pretraining: the squared-residual loss and a plain Adam loop."""
from __future__ import annotations

from typing import Callable, List, Mapping, Tuple

import numpy as np

from src.diffusion.denoiser import BoundDenoiser, Conditions, DenoiserNet
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.transitions import forward_diffuse
from src.numerics.arrays import DenseArray
from src.numerics.graph import CompGraph, Node
from src.numerics.optim import AdamState, adam_step
from src.utils.errors import ArgumentError, NonFiniteError
from src.utils.logger import get_logger

# (n, rng) -> (x0 batch, condition ids)
BatchSource = Callable[[int, np.random.Generator], Tuple[DenseArray, np.ndarray]]


def pretrain_loss_node(
    graph: CompGraph,
    net: DenoiserNet,
    params: Mapping[str, Node],
    x_t: DenseArray,
    t: np.ndarray,
    c: Conditions,
    eps: DenseArray,
) -> Node:
    """Batch mean of ||eps - eps_theta(x_t, t, c)||^2 with ``params`` already bound in ``graph``."""
    bound = BoundDenoiser(net=net, graph=graph, nodes=dict(params), tracked=True)
    residual = graph.constant(eps) - bound.eps(x_t, t, c)
    return graph.mean(graph.sum(graph.square(residual), axis=-1))


def pretrain_loss(
    net: DenoiserNet,
    x0: DenseArray,
    c: Conditions,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo value of the pretraining loss with t ~ U{1..T} and eps ~ N(0, I)."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n = x0.shape[0]
    t = rng.integers(1, sched.T + 1, size=n)
    eps = rng.standard_normal(x0.shape)
    x_t = forward_diffuse(x0, t, eps, sched)
    pred = net.predict(x_t, t, c)
    return float(np.mean(np.sum((eps - pred) ** 2, axis=-1)))


def fit_denoiser(
    net: DenoiserNet,
    source: BatchSource,
    sched: NoiseSchedule,
    steps: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    log_every: int = 50,
) -> Tuple[DenoiserNet, List[float]]:
    """Minimise the pretraining loss with Adam. Returns the trained net and the per-step loss history."""
    if steps < 0 or batch_size < 1:
        raise ArgumentError(f"fit_denoiser: need steps >= 0 and batch_size >= 1, got ({steps}, {batch_size})")
    logger = get_logger("pretrain")
    state = AdamState(lr=lr)
    params = {k: v.copy() for k, v in net.params.items()}
    history: List[float] = []

    for step in range(1, steps + 1):
        x0, c = source(batch_size, rng)
        t = rng.integers(1, sched.T + 1, size=batch_size)
        eps = rng.standard_normal(x0.shape)
        x_t = forward_diffuse(x0, t, eps, sched)

        graph = CompGraph()
        nodes = {name: graph.param(name, value) for name, value in params.items()}
        loss = pretrain_loss_node(graph, net, nodes, x_t, t, c, eps)
        grads = graph.backward(loss)
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteError(f"pretraining loss is not finite at step {step}", {"step": step, "loss": value})
        params = adam_step(state, params, grads)
        history.append(value)
        if log_every and step % log_every == 0:
            window = history[-log_every:]
            logger.info(f"pretrain step {step}/{steps} loss={np.mean(window):.4f}")
        else:
            logger.debug(f"pretrain step {step} loss={value:.6f}")
    return net.with_params(params), history
