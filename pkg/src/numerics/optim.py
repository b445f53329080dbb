from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from src.numerics.arrays import DenseArray
from src.utils.errors import ArgumentError, NonFiniteError


@dataclass
class AdamState:
    """Adam moments per parameter name. Defaults beta1=0.9, beta2=0.999, eps=1e-8.

    ``counts`` holds, per entry, how many updates that entry has received;
    bias correction uses it instead of the global ``step``.
    """
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, DenseArray] = field(default_factory=dict)
    v: Dict[str, DenseArray] = field(default_factory=dict)
    counts: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ArgumentError(f"Adam lr must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ArgumentError(f"Adam betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")


def adam_step(
    state: AdamState,
    params: Mapping[str, DenseArray],
    grads: Mapping[str, DenseArray],
) -> Dict[str, DenseArray]:
    """One bias-corrected Adam update; returns new parameter arrays.

    Entries whose gradient is exactly zero are left alone (parameter, moments
    and update count), so a zero gradient is a fixed point regardless of
    momentum. An entry's first nonzero gradient gets a fresh-state update
    however late it arrives.
    """
    for name, g in grads.items():
        if name not in params:
            raise ArgumentError(f"adam_step: gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ArgumentError(f"adam_step: {name!r} gradient shape {g.shape} != parameter shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            bad = int(g.size - np.count_nonzero(np.isfinite(g)))
            raise NonFiniteError(
                f"adam_step: non-finite gradient for parameter {name!r} ({bad} entries)",
                {"parameter": name, "non_finite": bad, "step": state.step + 1},
            )

    state.step += 1
    b1, b2 = state.beta1, state.beta2

    updated: Dict[str, DenseArray] = {}
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            updated[name] = value.copy()
            continue
        m = state.m.setdefault(name, np.zeros_like(value))
        v = state.v.setdefault(name, np.zeros_like(value))
        n = state.counts.setdefault(name, np.zeros(value.shape, dtype=np.int64))
        active = g != 0.0
        n[active] += 1
        m[active] = b1 * m[active] + (1.0 - b1) * g[active]
        v[active] = b2 * v[active] + (1.0 - b2) * g[active] * g[active]
        k = n[active]
        m_hat = m[active] / (1.0 - b1**k)
        v_hat = v[active] / (1.0 - b2**k)
        new_value = value.copy()
        new_value[active] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        updated[name] = new_value
    return updated
