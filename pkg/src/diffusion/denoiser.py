"""Fully connected epsilon-prediction network and its checkpoint format.

Input features are concat(x_t, sinusoidal embedding of t * time_scale,
one-hot condition). Hidden layers use tanh; the output layer is linear and
zero-initialised, so a fresh net predicts epsilon == 0.

Checkpoint layout (text, ``sdpo-lab-denoiser v1``)::

    sdpo-lab-denoiser v1
    {"dim": 2, "hidden": 64, ...}          # model config as JSON
    w0 2 24 64                             # name, ndim, shape...
    0.013 -0.2 ...                         # row-major values, repr floats
    b0 1 64
    ...
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.numerics.arrays import DenseArray, from_flat
from src.numerics.graph import CompGraph, Node
from src.utils.errors import ArgumentError

CHECKPOINT_MAGIC = "sdpo-lab-denoiser"
CHECKPOINT_VERSION = 1

Conditions = Union[int, np.ndarray]
Times = Union[int, float, np.ndarray]


class DenoiserConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dim: int = Field(2, ge=1, le=16)
    hidden: int = Field(64, ge=1)
    depth: int = Field(2, ge=1, le=8)
    time_embed_dim: int = Field(16, ge=2)
    n_conditions: int = Field(4, ge=1)
    time_scale: float = Field(1.0, gt=0)

    @property
    def input_dim(self) -> int:
        return self.dim + 2 * (self.time_embed_dim // 2) + self.n_conditions


def timestep_embedding(t: np.ndarray, dim: int, time_scale: float = 1.0) -> DenseArray:
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = (np.asarray(t, dtype=np.float64) * time_scale)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


@dataclass
class DenoiserNet:
    config: DenoiserConfig
    params: Dict[str, DenseArray] = field(default_factory=dict)

    @classmethod
    def initialize(
        cls,
        config: DenoiserConfig,
        rng: np.random.Generator,
        out_scale: float = 0.0,
    ) -> "DenoiserNet":
        """Glorot-normal hidden layers; output layer scaled by ``out_scale`` (0 = zero init)."""
        sizes = [config.input_dim] + [config.hidden] * config.depth + [config.dim]
        params: Dict[str, DenseArray] = {}
        n_layers = len(sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            std = math.sqrt(2.0 / (fan_in + fan_out))
            w = rng.normal(0.0, std, size=(fan_in, fan_out))
            if i == n_layers - 1:
                w = w * out_scale
            params[f"w{i}"] = w
            params[f"b{i}"] = np.zeros(fan_out)
        return cls(config=config, params=params)

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def copy(self) -> "DenoiserNet":
        return DenoiserNet(config=self.config, params={k: v.copy() for k, v in self.params.items()})

    def with_params(self, params: Dict[str, DenseArray]) -> "DenoiserNet":
        missing = set(self.params) - set(params)
        if missing:
            raise ArgumentError(f"with_params: missing {sorted(missing)}")
        return DenoiserNet(config=self.config, params={k: np.asarray(params[k], dtype=np.float64) for k in self.params})

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()

    def features(self, x_t: DenseArray, t: Times, c: Conditions) -> DenseArray:
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.ndim != 2 or x_t.shape[1] != self.config.dim:
            raise ArgumentError(f"denoiser input must be (batch, {self.config.dim}), got {x_t.shape}")
        n = x_t.shape[0]
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        c_arr = np.broadcast_to(np.asarray(c), (n,)).astype(np.int64)
        if np.any(c_arr < 0) or np.any(c_arr >= self.config.n_conditions):
            raise ArgumentError(f"condition ids must lie in [0, {self.config.n_conditions})")
        onehot = np.zeros((n, self.config.n_conditions))
        onehot[np.arange(n), c_arr] = 1.0
        emb = timestep_embedding(t_arr, self.config.time_embed_dim, self.config.time_scale)
        return np.concatenate([x_t, emb, onehot], axis=1)

    def bind(self, graph: CompGraph, tracked: bool = True, prefix: str = "") -> "BoundDenoiser":
        """Register the parameters in ``graph``: tracked params get gradients, untracked are constants."""
        nodes: Dict[str, Node] = {}
        for name, value in self.params.items():
            if tracked:
                nodes[name] = graph.param(prefix + name, value)
            else:
                nodes[name] = graph.constant(value, name=prefix + name)
        return BoundDenoiser(net=self, graph=graph, nodes=nodes, tracked=tracked)

    def predict(self, x_t: DenseArray, t: Times, c: Conditions) -> DenseArray:
        """Numeric epsilon prediction; accepts a single sample (dim,) or a batch (n, dim)."""
        x = np.asarray(x_t, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        out = self.bind(CompGraph(), tracked=False).eps(batch, t, c).value
        return out[0] if single else out

    def save(self, path: Path) -> None:
        lines: List[str] = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}", self.config.model_dump_json()]
        for name, value in self.params.items():
            lines.append(" ".join([name, str(value.ndim)] + [str(s) for s in value.shape]))
            lines.append(" ".join(repr(float(v)) for v in value.ravel()))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "DenoiserNet":
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
            raise ArgumentError(f"{path}: not a {CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} checkpoint")
        config = DenoiserConfig.model_validate(json.loads(lines[1]))
        params: Dict[str, DenseArray] = {}
        body = lines[2:]
        if len(body) % 2:
            raise ArgumentError(f"{path}: truncated parameter block")
        for header, values in zip(body[0::2], body[1::2]):
            parts = header.split()
            name, ndim = parts[0], int(parts[1])
            shape = [int(s) for s in parts[2 : 2 + ndim]]
            params[name] = from_flat(shape, [float(v) for v in values.split()], name=name)
        net = cls(config=config, params=params)
        expected = cls.initialize(config, np.random.default_rng(0))
        for name, value in expected.params.items():
            if name not in params or params[name].shape != value.shape:
                raise ArgumentError(f"{path}: parameter {name!r} missing or mis-shaped")
        return net


@dataclass
class BoundDenoiser:
    net: DenoiserNet
    graph: CompGraph
    nodes: Dict[str, Node]
    tracked: bool

    def eps(self, x_t: DenseArray, t: Times, c: Conditions) -> Node:
        h = self.graph.constant(self.net.features(x_t, t, c))
        last = self.net.n_layers - 1
        for i in range(self.net.n_layers):
            h = self.graph.add(self.graph.matmul(h, self.nodes[f"w{i}"]), self.nodes[f"b{i}"])
            if i < last:
                h = self.graph.tanh(h)
        return h

