from src.experiments.config import ExperimentConfig, RunConfig, load_config, parse_config
from src.experiments.diagnostics import DensityTrace, compare_unlike, density_trace, unlike_weight_ratio, weight_curve
from src.experiments.pairs import PreferencePair, gen_pairs, gen_unlike_pairs
from src.experiments.seeding import stream
from src.experiments.toy import ToyTarget, reward_oracle
from src.experiments.trainer import (
    align,
    beta_sweep,
    iterative_align,
    mean_reward,
    pretrain,
    stability_run,
)

__all__ = [
    "DensityTrace",
    "ExperimentConfig",
    "PreferencePair",
    "RunConfig",
    "ToyTarget",
    "align",
    "beta_sweep",
    "compare_unlike",
    "density_trace",
    "gen_pairs",
    "gen_unlike_pairs",
    "iterative_align",
    "load_config",
    "mean_reward",
    "parse_config",
    "pretrain",
    "reward_oracle",
    "stability_run",
    "stream",
    "unlike_weight_ratio",
    "weight_curve",
]
