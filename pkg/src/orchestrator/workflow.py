"""Run-directory workflows: one method per CLI command, each writing its artifacts under ``run_dir``."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.table import Table

from src.diffusion.denoiser import DenoiserNet
from src.diffusion.sampling import ddpm_sample
from src.diffusion.schedule import NoiseSchedule, window_bounds
from src.experiments.config import ExperimentConfig
from src.experiments.diagnostics import DensityTrace, compare_unlike, mean_abs_log_weight, unlike_weight_ratio, weight_curve
from src.experiments.pairs import PreferencePair, gen_pairs, gen_unlike_pairs, pair_columns, pair_rows, pairs_from_rows
from src.experiments.records import (
    DensityRow,
    PretrainRow,
    RoundRow,
    SweepRow,
    TrainingRow,
    TrajectoryRow,
    WeightCurveRow,
    point_columns,
    read_csv,
    write_csv,
    write_records,
    write_weight_rows,
)
from src.experiments.seeding import stream
from src.experiments.toy import ToyTarget
from src.experiments.trainer import beta_sweep, iterative_align, mean_reward, pretrain, reward_spread, stability_run
from src.experiments.trainer import align as align_run
from src.flow.sde import InterpolantSchedule, as_field, closed_form_gaussian_denoiser, flow_denoiser_config, sde_sample, train_denoiser
from src.reporting.plots import emit_plots, summarize
from src.utils.config import Settings
from src.utils.errors import ArgumentError, LabError
from src.utils.logger import get_logger

SUMMARY_COLUMNS = ("metric", "value")
SWEEP_BETAS = (0.02, 0.2, 2.0)
SWEEP_METHODS = ("sdpo", "dpo")
DIAGNOSTICS = ("weight-curve", "compare-unlike", "beta-sweep", "stability")


def write_summary(run_dir: Path, metrics: Sequence[Tuple[str, float]]) -> Path:
    return write_csv(run_dir / "summary.csv", SUMMARY_COLUMNS, ({"metric": k, "value": float(v)} for k, v in metrics))


class LabWorkflow:
    """Executes one command for one (config, seed) into a run directory."""

    def __init__(self, settings: Settings, config: ExperimentConfig, seed: int, run_dir: Path, method: Optional[str] = None):
        self.logger = get_logger("workflow")
        self.settings = settings
        self.config = config
        self.seed = seed
        self.run_dir = run_dir
        self.method = method or config.method
        self.run_id = run_dir.name
        self.sched: NoiseSchedule = config.schedule.build()
        self.target = ToyTarget.from_config(config.target)

    def snapshot(self, command: str, options: Dict[str, object]) -> Path:
        """config.snapshot.json: the validated config plus the command line that used it."""
        payload = {
            "command": command,
            "seed": self.seed,
            "method": self.method,
            "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(options.items())},
            "config": self.config.model_dump(mode="json"),
        }
        path = self.run_dir / "config.snapshot.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    # --- models and pairs -------------------------------------------------

    def _pretrained(self, checkpoint: Optional[Path]) -> DenoiserNet:
        if checkpoint is not None:
            if not checkpoint.exists():
                raise ArgumentError(f"checkpoint {checkpoint} does not exist")
            net = DenoiserNet.load(checkpoint)
            if net.config != self.config.model:
                self.logger.warning(f"checkpoint model config {net.config.model_dump()} differs from [model] in the config")
            self.logger.info(f"loaded checkpoint {checkpoint}")
            return net
        self.logger.info("no --checkpoint given, pretraining from scratch")
        return self._pretrain()

    def _pretrain(self) -> DenoiserNet:
        net = DenoiserNet.initialize(self.config.model, stream(self.seed, "init"))
        net, history = pretrain(net, self.target, self.sched, self.config.pretrain, stream(self.seed, "pretrain"))
        write_records(
            self.run_dir / "pretrain_loss.csv",
            PretrainRow,
            (PretrainRow(step=i + 1, loss=v) for i, v in enumerate(history)),
        )
        return net

    def _pairs(self, net: DenoiserNet, pairs_path: Optional[Path], n: Optional[int], unlike: bool) -> List[PreferencePair]:
        if pairs_path is not None:
            if not pairs_path.exists():
                raise ArgumentError(f"pairs file {pairs_path} does not exist")
            pairs = pairs_from_rows(read_csv(pairs_path), self.target.dim)
            self.logger.info(f"read {len(pairs)} pairs from {pairs_path}")
            return pairs
        count = n if n is not None else self.config.align.n_pairs
        rng = stream(self.seed, "pairs")
        if unlike:
            return gen_unlike_pairs(self.target, net, count, self.sched, rng)
        return gen_pairs(net, self.target, count, self.sched, rng)

    def _write_pairs(self, pairs: Sequence[PreferencePair]) -> Path:
        return write_csv(self.run_dir / "pairs.csv", pair_columns(self.target.dim), pair_rows(pairs))

    # --- commands -----------------------------------------------------------

    def pretrain(self) -> None:
        net = self._pretrain()
        net.save(self.run_dir / "checkpoint.txt")
        reward = mean_reward(net, self.target, self.sched, stream(self.seed, "reward"), self.config.diagnostics.reward_samples)
        write_summary(self.run_dir, [("pretrained_reward", reward)])
        self.logger.info(f"pretrained model mean reward {reward:.4f}")

    def gen_pairs(self, checkpoint: Optional[Path] = None, n: Optional[int] = None, unlike: Optional[bool] = None) -> None:
        net = self._pretrained(checkpoint)
        use_unlike = self.config.align.unlike if unlike is None else unlike
        pairs = self._pairs(net, None, n, use_unlike)
        self._write_pairs(pairs)

    def align(
        self,
        checkpoint: Optional[Path] = None,
        pairs_path: Optional[Path] = None,
        n: Optional[int] = None,
        unlike: Optional[bool] = None,
    ) -> None:
        diag = self.config.diagnostics
        ref = self._pretrained(checkpoint)
        use_unlike = self.config.align.unlike if unlike is None else unlike
        pairs = self._pairs(ref, pairs_path, n, use_unlike)
        if pairs_path is None:
            self._write_pairs(pairs)

        t_lo, t_hi = window_bounds(self.sched, *diag.window)
        trace = DensityTrace(
            pairs, t_lo, t_hi, self.sched, stream(self.seed, "density"), run_id=self.run_id, n_trace=diag.trace_pairs
        )
        cfg = self.config.run_config(self.seed, self.method)
        baseline = mean_reward(ref, self.target, self.sched, stream(self.seed, "reward"), diag.reward_samples)
        result = align_run(
            ref, ref.copy(), pairs, cfg, self.sched, stream(self.seed, "align"), run_id=self.run_id, hooks=[trace]
        )
        if not trace.rows or trace.rows[-1].step != cfg.steps:
            trace.record(cfg.steps, result.net)
        final = mean_reward(result.net, self.target, self.sched, stream(self.seed, "reward"), diag.reward_samples)

        write_records(self.run_dir / "training_log.csv", TrainingRow, result.log)
        write_weight_rows(self.run_dir / "weights.csv", result.weights)
        write_records(self.run_dir / "density_trace.csv", DensityRow, trace.rows)
        result.net.save(self.run_dir / "checkpoint.txt")
        write_summary(self.run_dir, [("baseline_reward", baseline), ("final_reward", final)])
        self.logger.info(f"{self.method}: mean reward {baseline:.4f} -> {final:.4f}")

    def iterate(
        self,
        checkpoint: Optional[Path] = None,
        rounds: Optional[int] = None,
        epochs: Optional[int] = None,
        pairs_per_round: Optional[int] = None,
    ) -> None:
        it = self.config.iterate
        ref = self._pretrained(checkpoint)
        result = iterative_align(
            ref,
            ref.copy(),
            self.target,
            self.sched,
            self.config.run_config(self.seed, self.method),
            stream(self.seed, "iterate"),
            rounds=rounds or it.rounds,
            pairs_per_round=pairs_per_round or it.pairs_per_round,
            epochs=epochs or it.epochs,
            reward_samples=self.config.diagnostics.reward_samples,
            run_id=self.run_id,
        )
        write_records(self.run_dir / "rounds.csv", RoundRow, result.rounds)
        write_records(self.run_dir / "training_log.csv", TrainingRow, result.log)
        result.net.save(self.run_dir / "checkpoint.txt")

    def diagnose(self, what: str, checkpoint: Optional[Path] = None, n: Optional[int] = None) -> None:
        if what not in DIAGNOSTICS:
            raise ArgumentError(f"--what must be one of {', '.join(DIAGNOSTICS)}, got {what!r}")
        diag = self.config.diagnostics
        net = self._pretrained(checkpoint)
        count = n if n is not None else diag.curve_samples
        if what == "weight-curve":
            rng = stream(self.seed, "weight-curve")
            c = rng.integers(0, self.target.n_conditions, size=count)
            x0 = ddpm_sample(net, c, self.sched, rng, n=count)
            rows = weight_curve(net, x0, c, self.sched, diag.bins, rng, self.run_id, clip=self.config.loss.clip)
            write_records(self.run_dir / "weight_curve.csv", WeightCurveRow, rows)
            self._log_curve(rows)
        elif what == "compare-unlike":
            on_policy, unlike = compare_unlike(
                net, self.target, self.sched, count, diag.bins, stream(self.seed, "compare-unlike"), self.run_id
            )
            write_records(self.run_dir / "weight_curve.csv", WeightCurveRow, on_policy + unlike)
            write_summary(
                self.run_dir,
                [
                    ("mean_raw_on_policy", float(np.mean([r.mean_raw for r in on_policy]))),
                    ("mean_raw_unlike", float(np.mean([r.mean_raw for r in unlike]))),
                    ("unlike_weight_ratio", unlike_weight_ratio(on_policy, unlike)),
                ],
            )
        elif what == "beta-sweep":
            rows = beta_sweep(
                net,
                self.target,
                self.sched,
                self.config.run_config(self.seed),
                methods=SWEEP_METHODS,
                betas=SWEEP_BETAS,
                seeds=(self.seed, self.seed + 1, self.seed + 2),
                n_pairs=n if n is not None else self.config.align.n_pairs,
                reward_samples=diag.reward_samples,
            )
            write_records(self.run_dir / "sweep.csv", SweepRow, rows)
            for method in SWEEP_METHODS:
                self.logger.info(f"{method}: final reward spread across beta {reward_spread(rows, method):.4f}")
        else:
            self._stability(net, n)

    def _log_curve(self, rows: Sequence[WeightCurveRow]) -> None:
        t_lo, t_hi = window_bounds(self.sched, *self.config.diagnostics.window)
        try:
            mid = mean_abs_log_weight(rows, t_lo, t_hi)
        except ArgumentError:
            self.logger.info(f"no weight-curve bin inside [{t_lo}, {t_hi}]")
            return
        self.logger.info(f"mean |log w| in [{t_lo}, {t_hi}] = {mid:.4f}, first bin = {rows[0].mean_abs_log_raw:.4f}")

    def _stability(self, net: DenoiserNet, n: Optional[int]) -> None:
        """Both methods at twice the configured step budget, scored on matched sampling noise."""
        pairs = gen_pairs(net, self.target, n if n is not None else self.config.align.n_pairs, self.sched, stream(self.seed, "pairs"))
        trajectory: List[TrajectoryRow] = []
        for method in SWEEP_METHODS:
            cfg = self.config.run_config(self.seed, method)
            cfg = cfg.model_copy(update={"steps": 2 * cfg.steps})
            trajectory.extend(
                stability_run(
                    net,
                    self.target,
                    self.sched,
                    cfg,
                    pairs,
                    eval_every=self.config.diagnostics.every,
                    reward_samples=self.config.diagnostics.reward_samples,
                )
            )
        write_records(self.run_dir / "trajectory.csv", TrajectoryRow, trajectory)

    def sde_sample(
        self,
        n_steps: Optional[int] = None,
        epsilon: Optional[float] = None,
        drift_form: Optional[str] = None,
        closed_form: Optional[bool] = None,
        n: Optional[int] = None,
    ) -> None:
        sde = self.config.sde
        eps = sde.epsilon if epsilon is None else epsilon
        form = drift_form or sde.drift_form
        count = n if n is not None else sde.n_samples
        steps = n_steps if n_steps is not None else sde.n_steps
        use_closed_form = sde.closed_form if closed_form is None else closed_form
        sched = InterpolantSchedule.linear(eps)
        if use_closed_form:
            self.logger.info("using the closed-form denoiser for N(0, I) data")
            eta = closed_form_gaussian_denoiser(sched)
        else:
            rng = stream(self.seed, "flow-train")
            data = self.target.sample(max(count, sde.batch_size * 8), rng)
            net = DenoiserNet.initialize(flow_denoiser_config(self.target.dim, self.config.model.hidden, self.config.model.depth), rng)
            net, history = train_denoiser(net, data, sched, sde.train_steps, rng, batch_size=sde.batch_size, lr=sde.lr)
            write_records(
                self.run_dir / "pretrain_loss.csv",
                PretrainRow,
                (PretrainRow(step=i + 1, loss=v) for i, v in enumerate(history)),
            )
            eta = as_field(net)

        result = sde_sample(
            eta,
            sched,
            steps,
            stream(self.seed, "sde"),
            n=count,
            dim=self.target.dim,
            form=form,
            record_paths=sde.record_paths > 0,
        )
        cols = point_columns("x", self.target.dim)
        write_csv(
            self.run_dir / "sde_samples.csv",
            ["sample_id"] + cols,
            ({"sample_id": i, **dict(zip(cols, map(float, row)))} for i, row in enumerate(result.x)),
        )
        if result.paths is not None:
            keep = min(sde.record_paths, count)
            write_csv(
                self.run_dir / "sde_paths.csv",
                ["path_id", "step", "t"] + cols,
                (
                    {"path_id": p, "step": j, "t": float(result.times[j]), **dict(zip(cols, map(float, result.paths[j, p])))}
                    for p in range(keep)
                    for j in range(result.paths.shape[0])
                ),
            )
        self.logger.info(
            f"{count} samples ({form}, eps={eps}): mean {np.round(result.x.mean(axis=0), 4).tolist()} "
            f"std {np.round(result.x.std(axis=0), 4).tolist()}"
        )


def report_run(run_dir: Path, settings: Settings, console: Optional[Console] = None) -> List[Path]:
    """Plots and summary for an existing run directory. Fails only if it holds none of the known CSVs."""
    if not run_dir.is_dir():
        raise ArgumentError(f"run directory {run_dir} does not exist")
    result = emit_plots(run_dir, settings.plot_width, settings.plot_height)
    if result.all_missing:
        raise LabError(f"{run_dir} holds none of the CSVs a report is built from")

    metrics: Dict[str, float] = {}
    previous = run_dir / "summary.csv"
    if previous.exists():
        metrics.update({r["metric"]: float(r["value"]) for r in read_csv(previous)})
    metrics.update(dict(summarize(run_dir)))
    written = result.written + [write_summary(run_dir, list(metrics.items()))]

    table = Table(title=f"Run {run_dir.name}")
    table.add_column("metric", style="cyan")
    table.add_column("value", justify="right")
    for name, value in metrics.items():
        table.add_row(name, f"{value:.6g}")
    (console or Console()).print(table)
    return written
