"""CSV rows written into a run directory.

Column orders are fixed by the dataclass field order. Floats are written with
``repr`` (shortest round-trip form) so reruns with the same seed are
byte-identical.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Type

import numpy as np

from src.preference.weights import WEIGHT_COLUMNS


@dataclass(frozen=True)
class PretrainRow:
    step: int
    loss: float


@dataclass(frozen=True)
class TrainingRow:
    run_id: str
    step: int
    t: int
    method: str
    loss: float
    logit: float
    w_raw: float
    w_clipped: float
    beta: float


@dataclass(frozen=True)
class DensityRow:
    run_id: str
    step: int
    t_lo: int
    t_hi: int
    logp_winner: float
    logp_loser: float
    difference: float


@dataclass(frozen=True)
class WeightCurveRow:
    run_id: str
    source: str
    bin: int
    t_lo: int
    t_hi: int
    mean_raw: float
    mean_abs_log_raw: float
    n: int


@dataclass(frozen=True)
class RoundRow:
    run_id: str
    round: int
    steps: int
    mean_reward: float
    pair_reward_gap: float
    final_loss: float


@dataclass(frozen=True)
class SweepRow:
    method: str
    beta: float
    seed: int
    baseline_reward: float
    final_reward: float


@dataclass(frozen=True)
class TrajectoryRow:
    method: str
    seed: int
    step: int
    mean_reward: float


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def columns_of(row_type: Type[Any]) -> List[str]:
    return [f.name for f in fields(row_type)]


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_cell(row[k]) for k in columns})
    return path


def write_records(path: Path, row_type: Type[Any], rows: Iterable[Any]) -> Path:
    return write_csv(path, columns_of(row_type), (asdict(r) for r in rows))


def write_weight_rows(path: Path, rows: Iterable[Mapping[str, Any]]) -> Path:
    return write_csv(path, WEIGHT_COLUMNS, rows)


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def point_columns(prefix: str, dim: int) -> List[str]:
    return [f"{prefix}{i}" for i in range(dim)]
