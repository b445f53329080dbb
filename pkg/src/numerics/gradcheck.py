from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.numerics.arrays import DenseArray
from src.numerics.graph import Builder, evaluate, forward_backward
from src.utils.errors import ArgumentError


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_dev: float
    max_abs_dev: float
    worst: Optional[Tuple[str, Tuple[int, ...]]]
    degenerate_failures: int
    n_checked: int
    rtol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_dev <= self.rtol and self.degenerate_failures == 0


def grad_check(
    build: Builder,
    params: Mapping[str, DenseArray],
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-8,
) -> GradCheckReport:
    """Compare analytic gradients with central differences (f(p+h) - f(p-h)) / 2h.

    Entries where both gradients are below ``atol`` are compared absolutely and
    do not enter the relative deviation.
    """
    if h <= 0:
        raise ArgumentError(f"grad_check: h must be positive, got {h}")
    base: Dict[str, DenseArray] = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = forward_backward(build, base)

    max_rel = 0.0
    max_abs = 0.0
    worst: Optional[Tuple[str, Tuple[int, ...]]] = None
    degenerate_failures = 0
    n_checked = 0
    for name, value in base.items():
        for idx in np.ndindex(value.shape):
            original = value[idx]
            value[idx] = original + h
            f_plus = evaluate(build, base)
            value[idx] = original - h
            f_minus = evaluate(build, base)
            value[idx] = original

            numeric = (f_plus - f_minus) / (2.0 * h)
            exact = float(analytic[name][idx])
            diff = abs(exact - numeric)
            scale = max(abs(exact), abs(numeric))
            n_checked += 1
            max_abs = max(max_abs, diff)
            if scale < atol:
                if diff > atol:
                    degenerate_failures += 1
                continue
            rel = diff / scale
            if rel > max_rel:
                max_rel = rel
                worst = (name, tuple(int(i) for i in idx))
    return GradCheckReport(
        max_rel_dev=max_rel,
        max_abs_dev=max_abs,
        worst=worst,
        degenerate_failures=degenerate_failures,
        n_checked=n_checked,
        rtol=rtol,
    )
