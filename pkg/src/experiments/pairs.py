from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Sequence, Tuple

import numpy as np

from src.diffusion.denoiser import DenoiserNet
from src.diffusion.sampling import ddpm_sample
from src.diffusion.schedule import NoiseSchedule
from src.experiments.records import point_columns
from src.experiments.toy import ToyTarget, reward_oracle
from src.numerics.arrays import DenseArray
from src.utils.errors import ArgumentError
from src.utils.logger import get_logger

Provenance = Literal["on-policy", "unlike"]


@dataclass(frozen=True)
class PreferencePair:
    c: int
    x0_w: DenseArray
    x0_l: DenseArray
    reward_w: float
    reward_l: float
    provenance: Provenance = "on-policy"

    def __post_init__(self) -> None:
        if self.reward_w < self.reward_l:
            raise ArgumentError(f"PreferencePair: reward_w {self.reward_w} < reward_l {self.reward_l}")
        if self.provenance not in ("on-policy", "unlike"):
            raise ArgumentError(f"PreferencePair: unknown provenance {self.provenance!r}")

    @property
    def gap(self) -> float:
        return self.reward_w - self.reward_l


def stack_pairs(pairs: Sequence[PreferencePair]) -> Tuple[np.ndarray, DenseArray, DenseArray]:
    """(conditions, winners, losers) as arrays."""
    if not pairs:
        raise ArgumentError("no preference pairs")
    c = np.array([p.c for p in pairs], dtype=np.int64)
    return c, np.stack([p.x0_w for p in pairs]), np.stack([p.x0_l for p in pairs])


def _rank(
    target: ToyTarget,
    c: np.ndarray,
    first: DenseArray,
    second: DenseArray,
    provenance: Provenance,
) -> List[PreferencePair]:
    """Winner is the higher-reward sample; ties go to ``first``."""
    r_first = reward_oracle(target, c, first)
    r_second = reward_oracle(target, c, second)
    pairs = []
    for i in range(c.shape[0]):
        if r_first[i] >= r_second[i]:
            pairs.append(PreferencePair(int(c[i]), first[i], second[i], float(r_first[i]), float(r_second[i]), provenance))
        else:
            pairs.append(PreferencePair(int(c[i]), second[i], first[i], float(r_second[i]), float(r_first[i]), provenance))
    return pairs


def gen_pairs(
    net: DenoiserNet,
    target: ToyTarget,
    n: int,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> List[PreferencePair]:
    """Two policy samples per random condition, ranked by the reward oracle."""
    if n < 1:
        raise ArgumentError(f"gen_pairs: n must be >= 1, got {n}")
    c = rng.integers(0, target.n_conditions, size=n)
    first = ddpm_sample(net, c, sched, rng, n=n)
    second = ddpm_sample(net, c, sched, rng, n=n)
    pairs = _rank(target, c, first, second, "on-policy")
    get_logger("pairs").info(f"generated {n} on-policy pairs, mean reward gap {np.mean([p.gap for p in pairs]):.4f}")
    return pairs


def gen_unlike_pairs(
    target: ToyTarget,
    net: DenoiserNet,
    n: int,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> List[PreferencePair]:
    """Winners from the condition's designated target mode, losers from the policy.

    A pair whose policy sample outranks the target draw is reordered so the
    reward invariant holds; provenance stays "unlike".
    """
    if n < 1:
        raise ArgumentError(f"gen_unlike_pairs: n must be >= 1, got {n}")
    c = rng.integers(0, target.n_conditions, size=n)
    external = target.sample_mode(c, n, rng)
    policy = ddpm_sample(net, c, sched, rng, n=n)
    pairs = _rank(target, c, external, policy, "unlike")
    get_logger("pairs").info(f"generated {n} unlike pairs, mean reward gap {np.mean([p.gap for p in pairs]):.4f}")
    return pairs


def pair_columns(dim: int) -> List[str]:
    return ["pair_id", "c", "provenance", "reward_w", "reward_l"] + point_columns("w", dim) + point_columns("l", dim)


def pair_rows(pairs: Sequence[PreferencePair]) -> List[Dict[str, Any]]:
    rows = []
    for i, p in enumerate(pairs):
        row: Dict[str, Any] = {
            "pair_id": i,
            "c": p.c,
            "provenance": p.provenance,
            "reward_w": p.reward_w,
            "reward_l": p.reward_l,
        }
        row.update({f"w{j}": float(v) for j, v in enumerate(p.x0_w)})
        row.update({f"l{j}": float(v) for j, v in enumerate(p.x0_l)})
        rows.append(row)
    return rows


def pairs_from_rows(rows: Sequence[Dict[str, str]], dim: int) -> List[PreferencePair]:
    """Inverse of pair_rows for CSVs read back with read_csv."""
    return [
        PreferencePair(
            c=int(r["c"]),
            x0_w=np.array([float(r[f"w{j}"]) for j in range(dim)]),
            x0_l=np.array([float(r[f"l{j}"]) for j in range(dim)]),
            reward_w=float(r["reward_w"]),
            reward_l=float(r["reward_l"]),
            provenance=r["provenance"],  # type: ignore[arg-type]
        )
        for r in rows
    ]
