"""Training loops: pretraining, preference alignment, the iterative protocol and the sweep helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.diffusion.denoiser import DenoiserNet
from src.diffusion.sampling import ddpm_sample
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.training import fit_denoiser
from src.experiments.config import PretrainConfig, RunConfig
from src.experiments.pairs import PreferencePair, gen_pairs, stack_pairs
from src.experiments.records import RoundRow, SweepRow, TrainingRow, TrajectoryRow
from src.experiments.seeding import stream
from src.experiments.toy import ToyTarget, reward_oracle
from src.numerics.graph import CompGraph
from src.numerics.optim import AdamState, adam_step
from src.preference.losses import PrefBatchStep, preference_step
from src.utils.errors import LabError, NonFiniteError
from src.utils.logger import get_logger

# called as hook(step, current_net) at step 0 and every diagnostics_every steps
Checkpoint = Callable[[int, DenoiserNet], None]


def pretrain(
    net: DenoiserNet,
    target: ToyTarget,
    sched: NoiseSchedule,
    cfg: PretrainConfig,
    rng: np.random.Generator,
) -> Tuple[DenoiserNet, List[float]]:
    source = target.source() if cfg.mean_scale == 1.0 else target.rescaled(cfg.mean_scale).source()
    return fit_denoiser(net, source, sched, cfg.steps, cfg.batch_size, cfg.lr, rng)


def mean_reward(
    net: DenoiserNet,
    target: ToyTarget,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    n: int = 256,
) -> float:
    """Mean oracle reward of fresh conditional samples: the toy quality score."""
    c = rng.integers(0, target.n_conditions, size=n)
    x = ddpm_sample(net, c, sched, rng, n=n)
    return float(np.mean(reward_oracle(target, c, x)))


def timestep_range(cfg: RunConfig, sched: NoiseSchedule) -> Tuple[int, int]:
    """Inclusive training range: {2..T}, or the configured window clamped into it."""
    if cfg.loss.timestep_window is None:
        return 2, sched.T
    lo, hi = cfg.loss.timestep_window
    return max(2, lo), min(sched.T, hi)


@dataclass
class AlignResult:
    net: DenoiserNet
    log: List[TrainingRow] = field(default_factory=list)
    weights: List[Dict[str, object]] = field(default_factory=list)


def align(
    net: DenoiserNet,
    ref_net: DenoiserNet,
    pairs: Sequence[PreferencePair],
    cfg: RunConfig,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    run_id: str = "run",
    hooks: Sequence[Checkpoint] = (),
    step_offset: int = 0,
) -> AlignResult:
    """Preference-align ``net`` against the frozen ``ref_net`` for ``cfg.steps`` Adam steps.

    Each step draws a minibatch of pairs and one timestep shared by the batch.
    A non-finite loss aborts the run with the step's weight report attached.
    """
    logger = get_logger("align")
    ref_print = ref_net.fingerprint()
    c_all, xw_all, xl_all = stack_pairs(pairs)
    t_lo, t_hi = timestep_range(cfg, sched)
    beta = cfg.beta
    state = AdamState(lr=cfg.lr)
    params = {k: v.copy() for k, v in net.params.items()}
    result = AlignResult(net=net)

    for hook in hooks:
        hook(step_offset, net)

    for i in range(1, cfg.steps + 1):
        step = step_offset + i
        idx = rng.integers(0, len(pairs), size=cfg.batch_size)
        t = int(rng.integers(t_lo, t_hi + 1))
        batch = PrefBatchStep.build(c_all[idx], xw_all[idx], xl_all[idx], t, sched, rng)

        graph = CompGraph()
        current = net.with_params(params)
        out = preference_step(cfg.method, current.bind(graph), ref_net, batch, cfg.loss, sched)
        value = out.loss.item()
        if not math.isfinite(value):
            raise NonFiniteError(
                f"{cfg.method} loss is not finite at step {step} (t={t})",
                {"step": step, "t": t, "loss": value, "weights": out.report.as_details()},
            )
        grads = graph.backward(out.loss)
        params = adam_step(state, params, grads)

        result.log.append(
            TrainingRow(
                run_id=run_id,
                step=step,
                t=t,
                method=cfg.method,
                loss=value,
                logit=float(np.mean(out.logit)),
                w_raw=float(np.mean(out.report.raw)),
                w_clipped=float(np.mean(out.report.clipped)),
                beta=beta,
            )
        )
        result.weights.append(out.report.csv_row(run_id, step))
        logger.debug(f"step {step} t={t} loss={value:.6f}")

        if i % cfg.diagnostics_every == 0:
            window = result.log[-cfg.diagnostics_every :]
            logger.info(f"{cfg.method} step {i}/{cfg.steps} loss={np.mean([r.loss for r in window]):.4f}")
            if hooks:
                current = net.with_params(params)
                for hook in hooks:
                    hook(step, current)

    if ref_net.fingerprint() != ref_print:
        raise LabError("reference model parameters changed during alignment")
    result.net = net.with_params(params)
    return result


@dataclass
class IterateResult:
    net: DenoiserNet
    rounds: List[RoundRow]
    log: List[TrainingRow]


def iterative_align(
    net: DenoiserNet,
    ref_net: DenoiserNet,
    target: ToyTarget,
    sched: NoiseSchedule,
    cfg: RunConfig,
    rng: np.random.Generator,
    rounds: int = 10,
    pairs_per_round: int = 300,
    epochs: int = 20,
    reward_samples: int = 256,
    run_id: str = "run",
) -> IterateResult:
    """Rounds of: fresh on-policy pairs from the current net, ``epochs`` passes of align, score.

    The reference stays the model passed in as ``ref_net`` for every round.
    Row 0 holds the starting model's score. Every round is scored on the same
    ``stream(cfg.seed, "reward")`` noise so rows differ only through the weights.
    """
    if rounds < 1:
        raise LabError(f"iterative_align needs rounds >= 1, got {rounds}")
    logger = get_logger("iterate")
    steps = epochs * math.ceil(pairs_per_round / cfg.batch_size)
    round_cfg = cfg.model_copy(update={"steps": steps})
    current = net.copy()
    rows = [
        RoundRow(
            run_id=run_id,
            round=0,
            steps=0,
            mean_reward=mean_reward(current, target, sched, stream(cfg.seed, "reward"), reward_samples),
            pair_reward_gap=0.0,
            final_loss=float("nan"),
        )
    ]
    log: List[TrainingRow] = []
    for r in range(1, rounds + 1):
        pairs = gen_pairs(current, target, pairs_per_round, sched, rng)
        res = align(current, ref_net, pairs, round_cfg, sched, rng, run_id=run_id, step_offset=(r - 1) * steps)
        current = res.net
        log.extend(res.log)
        score = mean_reward(current, target, sched, stream(cfg.seed, "reward"), reward_samples)
        rows.append(
            RoundRow(
                run_id=run_id,
                round=r,
                steps=steps,
                mean_reward=score,
                pair_reward_gap=float(np.mean([p.gap for p in pairs])),
                final_loss=res.log[-1].loss if res.log else float("nan"),
            )
        )
        logger.info(f"round {r}/{rounds} mean reward {score:.4f}")
    return IterateResult(net=current, rounds=rows, log=log)


def beta_sweep(
    pretrained: DenoiserNet,
    target: ToyTarget,
    sched: NoiseSchedule,
    base: RunConfig,
    methods: Sequence[str] = ("sdpo", "dpo"),
    betas: Sequence[float] = (0.02, 0.2, 2.0),
    seeds: Sequence[int] = (0, 1, 2),
    n_pairs: int = 1000,
    reward_samples: int = 256,
) -> List[SweepRow]:
    """Final mean reward per (method, beta, seed), all runs of a seed sharing its pairs."""
    rows = []
    for seed in seeds:
        pairs = gen_pairs(pretrained, target, n_pairs, sched, stream(seed, "pairs"))
        baseline = mean_reward(pretrained, target, sched, stream(seed, "reward"), reward_samples)
        for method in methods:
            for beta in betas:
                cfg = base.model_copy(
                    update={"method": method, "seed": seed, "loss": base.loss.model_copy(update={"beta": beta})}
                )
                res = align(pretrained, pretrained, pairs, cfg, sched, stream(seed, f"align-{method}-{beta!r}"))
                final = mean_reward(res.net, target, sched, stream(seed, "reward"), reward_samples)
                rows.append(SweepRow(method=method, beta=float(beta), seed=int(seed), baseline_reward=baseline, final_reward=final))
    return rows


def reward_spread(rows: Sequence[SweepRow], method: str, seed: Optional[int] = None) -> float:
    """max - min of final reward across betas for one method (optionally one seed)."""
    values = [r.final_reward for r in rows if r.method == method and (seed is None or r.seed == seed)]
    if not values:
        raise LabError(f"no sweep rows for method {method!r}")
    return float(max(values) - min(values))


def stability_run(
    pretrained: DenoiserNet,
    target: ToyTarget,
    sched: NoiseSchedule,
    cfg: RunConfig,
    pairs: Sequence[PreferencePair],
    eval_every: int = 100,
    reward_samples: int = 256,
) -> List[TrajectoryRow]:
    """Mean-reward trajectory of one long alignment run, scored every ``eval_every`` steps.

    Every checkpoint is scored on the same sampling noise.
    """
    trajectory: List[TrajectoryRow] = []

    def score(step: int, net: DenoiserNet) -> None:
        value = mean_reward(net, target, sched, stream(cfg.seed, "reward"), reward_samples)
        trajectory.append(TrajectoryRow(method=cfg.method, seed=cfg.seed, step=step, mean_reward=value))

    run_cfg = cfg.model_copy(update={"diagnostics_every": eval_every})
    align(pretrained, pretrained, pairs, run_cfg, sched, stream(cfg.seed, f"stability-{cfg.method}"), hooks=[score])
    return trajectory
