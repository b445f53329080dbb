"""Training diagnostics: transition-density traces and importance-weight curves over t."""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.diffusion.denoiser import DenoiserNet
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.transitions import forward_diffuse, gaussian_log_density, model_reverse_params
from src.experiments.pairs import PreferencePair, gen_pairs, gen_unlike_pairs, stack_pairs
from src.experiments.records import DensityRow, WeightCurveRow
from src.experiments.toy import ToyTarget
from src.numerics.arrays import DenseArray
from src.preference.weights import ClipConfig, draw_posterior_point, importance_weights
from src.utils.errors import ArgumentError
from src.utils.logger import get_logger


class DensityTrace:
    """Mean log p_theta(x_{t-1} | x_t) on winner and loser trace points, recorded per checkpoint.

    Trace timesteps, noise and x_{t-1} points are drawn once, so successive
    checkpoints are compared on identical inputs. Rows are append-only and
    indexed by strictly increasing step.
    """

    def __init__(
        self,
        pairs: Sequence[PreferencePair],
        t_lo: int,
        t_hi: int,
        sched: NoiseSchedule,
        rng: np.random.Generator,
        run_id: str = "run",
        n_trace: Optional[int] = None,
    ):
        t_lo = max(2, int(t_lo))
        t_hi = min(sched.T, int(t_hi))
        if t_lo >= t_hi:
            raise ArgumentError(f"density trace window needs t_lo < t_hi, got [{t_lo}, {t_hi}]")
        c, x_w, x_l = stack_pairs(pairs)
        if n_trace is not None and n_trace < c.shape[0]:
            idx = np.sort(rng.choice(c.shape[0], size=n_trace, replace=False))
            c, x_w, x_l = c[idx], x_w[idx], x_l[idx]
        self.run_id = run_id
        self.sched = sched
        self.t_lo, self.t_hi = t_lo, t_hi
        self.c = c
        self.t = rng.integers(t_lo, t_hi + 1, size=c.shape[0])
        self.x_t_w = forward_diffuse(x_w, self.t, rng.standard_normal(x_w.shape), sched)
        self.x_t_l = forward_diffuse(x_l, self.t, rng.standard_normal(x_l.shape), sched)
        self.x_prev_w = draw_posterior_point(x_w, self.x_t_w, self.t, sched, rng)
        self.x_prev_l = draw_posterior_point(x_l, self.x_t_l, self.t, sched, rng)
        self.rows: List[DensityRow] = []

    def _mean_log_density(self, net: DenoiserNet, x_t: DenseArray, x_prev: DenseArray) -> float:
        return float(np.mean(gaussian_log_density(x_prev, model_reverse_params(net, x_t, self.t, self.c, self.sched))))

    def record(self, step: int, net: DenoiserNet) -> DensityRow:
        if self.rows and step <= self.rows[-1].step:
            raise ArgumentError(f"density trace is append-only: step {step} after {self.rows[-1].step}")
        lp_w = self._mean_log_density(net, self.x_t_w, self.x_prev_w)
        lp_l = self._mean_log_density(net, self.x_t_l, self.x_prev_l)
        row = DensityRow(
            run_id=self.run_id,
            step=int(step),
            t_lo=self.t_lo,
            t_hi=self.t_hi,
            logp_winner=lp_w,
            logp_loser=lp_l,
            difference=lp_w - lp_l,
        )
        self.rows.append(row)
        return row

    def __call__(self, step: int, net: DenoiserNet) -> None:
        self.record(step, net)


def density_trace(
    checkpoints: Sequence[Tuple[int, DenoiserNet]],
    pairs: Sequence[PreferencePair],
    t_lo: int,
    t_hi: int,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    run_id: str = "run",
) -> List[DensityRow]:
    """Winner/loser density means and their difference at each (step, net) checkpoint."""
    trace = DensityTrace(pairs, t_lo, t_hi, sched, rng, run_id=run_id)
    for step, net in checkpoints:
        trace.record(step, net)
    return trace.rows


def timestep_bins(sched: NoiseSchedule, bins: int) -> List[Tuple[int, int]]:
    """Split {2..T} into ``bins`` contiguous inclusive ranges."""
    if bins < 2:
        raise ArgumentError(f"weight curve needs bins >= 2, got {bins}")
    if bins > sched.T - 1:
        raise ArgumentError(f"cannot split {sched.T - 1} timesteps into {bins} bins")
    edges = np.floor(np.linspace(2, sched.T + 1, bins + 1)).astype(np.int64)
    return [(int(edges[i]), int(edges[i + 1]) - 1) for i in range(bins)]


def weight_curve(
    net: DenoiserNet,
    x0: DenseArray,
    c: np.ndarray,
    sched: NoiseSchedule,
    bins: int,
    rng: np.random.Generator,
    run_id: str = "run",
    source: str = "on-policy",
    clip: Optional[ClipConfig] = None,
) -> List[WeightCurveRow]:
    """Mean raw importance weight of the samples ``x0`` per timestep bin across [2, T]."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    c = np.broadcast_to(np.asarray(c, dtype=np.int64), (x0.shape[0],))
    rows = []
    for b, (lo, hi) in enumerate(timestep_bins(sched, bins)):
        t = rng.integers(lo, hi + 1, size=x0.shape[0])
        x_t = forward_diffuse(x0, t, rng.standard_normal(x0.shape), sched)
        report = importance_weights(net, x0, x_t, t, c, sched, rng=rng, clip=clip)
        rows.append(
            WeightCurveRow(
                run_id=run_id,
                source=source,
                bin=b,
                t_lo=lo,
                t_hi=hi,
                mean_raw=float(np.mean(report.raw)),
                mean_abs_log_raw=float(np.mean(np.abs(np.log(report.raw)))),
                n=int(x0.shape[0]),
            )
        )
    return rows


def mean_abs_log_weight(rows: Sequence[WeightCurveRow], t_lo: int, t_hi: int) -> float:
    """Average mean |log w| over the bins lying inside [t_lo, t_hi]."""
    inside = [r.mean_abs_log_raw for r in rows if r.t_lo >= t_lo and r.t_hi <= t_hi]
    if not inside:
        raise ArgumentError(f"no weight-curve bin lies inside [{t_lo}, {t_hi}]")
    return float(np.mean(inside))


def unlike_weight_ratio(on_policy: Sequence[WeightCurveRow], unlike: Sequence[WeightCurveRow]) -> float:
    """Mean raw weight of the unlike curve over that of the on-policy curve, bins matched by range."""
    if [(r.t_lo, r.t_hi) for r in on_policy] != [(r.t_lo, r.t_hi) for r in unlike] or not on_policy:
        raise ArgumentError("weight curves must cover the same non-empty timestep bins")
    return float(np.mean([r.mean_raw for r in unlike]) / np.mean([r.mean_raw for r in on_policy]))


def compare_unlike(
    net: DenoiserNet,
    target: ToyTarget,
    sched: NoiseSchedule,
    n: int,
    bins: int,
    rng: np.random.Generator,
    run_id: str = "run",
) -> Tuple[List[WeightCurveRow], List[WeightCurveRow]]:
    """Weight curves of on-policy winners and unlike winners on matched timestep draws."""
    on_policy = gen_pairs(net, target, n, sched, rng)
    unlike = gen_unlike_pairs(target, net, n, sched, rng)
    curve_seed = int(rng.integers(0, 2**32))
    curves = []
    for label, pairs in (("on-policy", on_policy), ("unlike", unlike)):
        c, x_w, _ = stack_pairs(pairs)
        curves.append(weight_curve(net, x_w, c, sched, bins, np.random.default_rng(curve_seed), run_id, source=label))
    on_mean = np.mean([r.mean_raw for r in curves[0]])
    un_mean = np.mean([r.mean_raw for r in curves[1]])
    get_logger("diagnostics").info(
        f"mean raw weight on-policy={on_mean:.4f} unlike={un_mean:.4f} ratio={unlike_weight_ratio(*curves):.4f}"
    )
    return curves[0], curves[1]
