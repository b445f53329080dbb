"""Render a run directory's CSVs as SVG plots and condense them into a summary."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.experiments.records import read_csv
from src.reporting.svg import LinePlot
from src.utils.logger import get_logger


@dataclass(frozen=True)
class PlotSpec:
    csv_name: str
    svg_name: str
    title: str
    xlabel: str
    ylabel: str
    x: Callable[[Dict[str, str]], float]
    ys: Tuple[str, ...]
    group: Optional[str] = None


def _col(name: str) -> Callable[[Dict[str, str]], float]:
    return lambda row: float(row[name])


def _bin_mid(row: Dict[str, str]) -> float:
    return 0.5 * (float(row["t_lo"]) + float(row["t_hi"]))


def _log10_beta(row: Dict[str, str]) -> float:
    return math.log10(float(row["beta"]))


PLOTS: Tuple[PlotSpec, ...] = (
    PlotSpec("pretrain_loss.csv", "pretrain_loss.svg", "Pretraining loss", "step", "loss", _col("step"), ("loss",)),
    PlotSpec("training_log.csv", "loss.svg", "Preference loss", "step", "loss", _col("step"), ("loss",), group="method"),
    PlotSpec("weight_curve.csv", "weight_curve.svg", "Importance weight by timestep", "t", "mean raw w(t)", _bin_mid, ("mean_raw",), group="source"),
    PlotSpec(
        "density_trace.csv",
        "density_trace.svg",
        "Transition log-density on winners and losers",
        "step",
        "mean log p",
        _col("step"),
        ("logp_winner", "logp_loser", "difference"),
    ),
    PlotSpec("rounds.csv", "rounds.svg", "Mean reward per round", "round", "mean reward", _col("round"), ("mean_reward",)),
    PlotSpec("sweep.csv", "beta_sweep.svg", "Final reward across beta", "log10 beta", "final reward", _log10_beta, ("final_reward",), group="method"),
    PlotSpec("trajectory.csv", "stability.svg", "Reward during extended training", "step", "mean reward", _col("step"), ("mean_reward",), group="method"),
)


@dataclass
class EmitResult:
    written: List[Path] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)

    @property
    def all_missing(self) -> bool:
        return not self.written and len(self.missing) == len(PLOTS)


def _series(rows: Sequence[Dict[str, str]], spec: PlotSpec) -> "OrderedDict[str, Tuple[List[float], List[float]]]":
    """Series keyed by name; rows sharing an x within a group are averaged (e.g. over seeds)."""
    out: "OrderedDict[str, Dict[float, List[float]]]" = OrderedDict()
    for row in rows:
        prefix = f"{row[spec.group]} " if spec.group else ""
        x = spec.x(row)
        for y in spec.ys:
            name = (prefix + y).strip() if len(spec.ys) > 1 or not spec.group else row[spec.group]
            out.setdefault(name, {}).setdefault(x, []).append(float(row[y]))
    result: "OrderedDict[str, Tuple[List[float], List[float]]]" = OrderedDict()
    for name, points in out.items():
        xs = sorted(points)
        result[name] = (xs, [float(np.mean(points[x])) for x in xs])
    return result


def emit_plots(run_dir: Path, width: int = 640, height: int = 400) -> EmitResult:
    """Write one SVG per known CSV present in ``run_dir``; missing or empty CSVs are skipped."""
    logger = get_logger("report")
    result = EmitResult()
    for spec in PLOTS:
        path = run_dir / spec.csv_name
        if not path.exists():
            result.missing.append(spec.csv_name)
            continue
        rows = read_csv(path)
        if not rows:
            logger.warning(f"{spec.csv_name} has no rows, skipping {spec.svg_name}")
            result.skipped.append(spec.csv_name)
            continue
        plot = LinePlot(spec.title, spec.xlabel, spec.ylabel, width=width, height=height)
        for name, (xs, ys) in _series(rows, spec).items():
            plot.add_series(name, xs, ys)
        if not plot.series:
            logger.warning(f"{spec.csv_name} has no finite values, skipping {spec.svg_name}")
            result.skipped.append(spec.csv_name)
            continue
        out = run_dir / spec.svg_name
        out.write_text(plot.render(), encoding="utf-8")
        result.written.append(out)
    if result.missing:
        logger.info(f"not present in {run_dir}: {', '.join(result.missing)}")
    return result


def summarize(run_dir: Path) -> List[Tuple[str, float]]:
    """Headline numbers from whichever CSVs the run produced, as (metric, value) rows."""
    metrics: List[Tuple[str, float]] = []

    def rows_of(name: str) -> List[Dict[str, str]]:
        path = run_dir / name
        return read_csv(path) if path.exists() else []

    pretrain = rows_of("pretrain_loss.csv")
    if pretrain:
        tail = pretrain[-min(100, len(pretrain)) :]
        metrics.append(("pretrain_final_loss", float(np.mean([float(r["loss"]) for r in tail]))))
    log = rows_of("training_log.csv")
    if log:
        tail = log[-min(50, len(log)) :]
        metrics.append(("align_final_loss", float(np.mean([float(r["loss"]) for r in tail]))))
        metrics.append(("align_mean_w_raw", float(np.mean([float(r["w_raw"]) for r in log]))))
        metrics.append(("align_mean_w_clipped", float(np.mean([float(r["w_clipped"]) for r in log]))))
    density = rows_of("density_trace.csv")
    if density:
        metrics.append(("density_difference_first", float(density[0]["difference"])))
        metrics.append(("density_difference_last", float(density[-1]["difference"])))
    rounds = rows_of("rounds.csv")
    if rounds:
        metrics.append(("round_first_reward", float(rounds[0]["mean_reward"])))
        metrics.append(("round_last_reward", float(rounds[-1]["mean_reward"])))
    curve = rows_of("weight_curve.csv")
    for source in OrderedDict.fromkeys(r["source"] for r in curve):
        values = [float(r["mean_raw"]) for r in curve if r["source"] == source]
        metrics.append((f"weight_curve_mean_raw[{source}]", float(np.mean(values))))
    return metrics
