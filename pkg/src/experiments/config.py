"""Experiment config: one TOML file validated against versioned pydantic models.

Every field has a default, so a file holding only ``schema_version = 1`` is a
complete config. Unknown keys are rejected.
"""
from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - same API, backport for 3.10
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.diffusion.denoiser import DenoiserConfig
from src.diffusion.schedule import NoiseSchedule, make_schedule
from src.flow.sde import DriftForm
from src.preference.losses import LossConfig
from src.utils.errors import ConfigError, UsageError

SCHEMA_VERSION = 1

_Strict = ConfigDict(extra="forbid", frozen=True)


class ScheduleConfig(BaseModel):
    model_config = _Strict

    T: int = Field(1000, ge=2)
    beta_start: float = Field(1e-4, gt=0.0, lt=1.0)
    beta_end: float = Field(0.02, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _ordered(self) -> "ScheduleConfig":
        if self.beta_start > self.beta_end:
            raise ValueError(f"beta_start ({self.beta_start}) must not exceed beta_end ({self.beta_end})")
        return self

    def build(self) -> NoiseSchedule:
        return make_schedule(self.T, self.beta_start, self.beta_end)


class TargetConfig(BaseModel):
    model_config = _Strict

    means: List[List[float]] = Field(
        default_factory=lambda: [[1.5, 1.5], [-1.5, 1.5], [-1.5, -1.5], [1.5, -1.5]],
        min_length=1,
    )
    scale: float = Field(0.35, gt=0.0)
    weights: Optional[List[float]] = None
    condition_map: Optional[List[int]] = None
    condition_fidelity: float = Field(0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _consistent(self) -> "TargetConfig":
        dims = {len(m) for m in self.means}
        if len(dims) != 1:
            raise ValueError("all target means must have the same dimension")
        if self.weights is not None:
            if len(self.weights) != len(self.means) or any(w <= 0 for w in self.weights):
                raise ValueError("weights must be positive, one per mean")
        if self.condition_map is not None and any(not 0 <= k < len(self.means) for k in self.condition_map):
            raise ValueError(f"condition_map entries must index means [0, {len(self.means)})")
        return self

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @property
    def n_conditions(self) -> int:
        return len(self.condition_map) if self.condition_map is not None else len(self.means)


class PretrainConfig(BaseModel):
    """Denoiser pretraining; ``mean_scale`` != 1 trains on the target with its mode means scaled,
    a weaker generator that under-covers the exact target."""
    model_config = _Strict

    steps: int = Field(3000, ge=0)
    batch_size: int = Field(256, ge=1)
    lr: float = Field(2e-3, gt=0.0)
    mean_scale: float = Field(1.0, gt=0.0)


class AlignConfig(BaseModel):
    model_config = _Strict

    steps: int = Field(500, ge=0)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(1e-4, gt=0.0)
    n_pairs: int = Field(10000, ge=1)
    unlike: bool = False


class IterateConfig(BaseModel):
    model_config = _Strict

    rounds: int = Field(10, ge=1)
    pairs_per_round: int = Field(300, ge=1)
    epochs: int = Field(20, ge=1)


class DiagnosticsConfig(BaseModel):
    model_config = _Strict

    every: int = Field(50, ge=1)
    window: List[float] = Field(default_factory=lambda: [0.5, 0.6], min_length=2, max_length=2)
    trace_pairs: int = Field(64, ge=1)
    bins: int = Field(10, ge=2)
    curve_samples: int = Field(256, ge=1)
    reward_samples: int = Field(256, ge=1)

    @model_validator(mode="after")
    def _window(self) -> "DiagnosticsConfig":
        lo, hi = self.window
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"window must satisfy 0 <= lo < hi <= 1, got {self.window}")
        return self


class SDEConfig(BaseModel):
    model_config = _Strict

    n_steps: int = Field(200, ge=2)
    n_samples: int = Field(1000, ge=1)
    epsilon: float = Field(0.1, ge=0.0)
    drift_form: DriftForm = "printed"
    closed_form: bool = False
    train_steps: int = Field(2000, ge=0)
    batch_size: int = Field(128, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    record_paths: int = Field(8, ge=0)


class RunConfig(BaseModel):
    """Everything one alignment run needs besides the models and pairs."""
    model_config = _Strict

    method: Literal["dpo", "cm", "sdpo"] = "sdpo"
    seed: int = 0
    loss: LossConfig = Field(default_factory=LossConfig)
    lr: float = Field(1e-4, gt=0.0)
    steps: int = Field(500, ge=0)
    batch_size: int = Field(16, ge=1)
    diagnostics_every: int = Field(50, ge=1)

    @property
    def beta(self) -> float:
        return self.loss.beta_for(self.method)


class ExperimentConfig(BaseModel):
    model_config = _Strict

    schema_version: Literal[1]
    method: Literal["dpo", "cm", "sdpo"] = "sdpo"
    seed: Optional[int] = None
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    model: DenoiserConfig = Field(default_factory=DenoiserConfig)
    target: TargetConfig = Field(default_factory=TargetConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    align: AlignConfig = Field(default_factory=AlignConfig)
    iterate: IterateConfig = Field(default_factory=IterateConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    sde: SDEConfig = Field(default_factory=SDEConfig)

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        if self.model.dim != self.target.dim:
            raise ValueError(f"model.dim ({self.model.dim}) must equal the target dimension ({self.target.dim})")
        if self.model.n_conditions != self.target.n_conditions:
            raise ValueError(
                f"model.n_conditions ({self.model.n_conditions}) must equal the target's conditions ({self.target.n_conditions})"
            )
        window = self.loss.timestep_window
        if window is not None and window[1] > self.schedule.T:
            raise ValueError(f"loss.timestep_window {list(window)} exceeds T={self.schedule.T}")
        return self

    def run_config(self, seed: int, method: Optional[str] = None) -> RunConfig:
        return RunConfig(
            method=method or self.method,
            seed=seed,
            loss=self.loss,
            lr=self.align.lr,
            steps=self.align.steps,
            batch_size=self.align.batch_size,
            diagnostics_every=self.diagnostics.every,
        )


def _field_messages(err: ValidationError) -> List[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        fields = _field_messages(e)
        raise ConfigError(f"{source}: " + "; ".join(fields), fields) from e


def load_config(path: Optional[Path]) -> ExperimentConfig:
    """Read and validate a TOML config; ``None`` gives the all-defaults config."""
    if path is None:
        return ExperimentConfig(schema_version=SCHEMA_VERSION)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"{path}: no such config file", ["<file>"]) from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML ({e})", ["<file>"]) from e
    return parse_config(data, str(path))


def require_seed(seed: Optional[int]) -> int:
    """The master seed from the command line; missing or negative is a usage error."""
    if seed is None:
        raise UsageError("--seed is required")
    if seed < 0:
        raise UsageError(f"--seed must be non-negative, got {seed}")
    return int(seed)
