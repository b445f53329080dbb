"""Minimal reverse-mode automatic differentiation over a fixed set of primitives.

A CompGraph is a tape: nodes are appended in creation order, so every node's
parents precede it and backward simply walks the tape in reverse. Values are
computed eagerly; shapes are checked before a node computes anything.

Primitives: matmul, add, tanh, mul, scale, sum, mean, square, log_sigmoid,
sigmoid, clip. Broadcasting is limited to matrix + row-vector in ``add``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from src.numerics.arrays import DenseArray, as_dense
from src.utils.errors import ArgumentError, GraphStructureError

Operand = Union["Node", float, int]


def _stable_sigmoid(x: DenseArray) -> DenseArray:
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass(eq=False)
class Node:
    graph: "CompGraph"
    index: int
    op: str
    parents: Tuple[int, ...]
    value: DenseArray
    requires_grad: bool
    name: Optional[str] = None
    attrs: Dict[str, Any] = field(default_factory=dict)
    grad: Optional[DenseArray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ArgumentError(f"node {self.index} ({self.op}) is not scalar: shape {self.shape}")
        return float(self.value.reshape(()))

    def numpy(self) -> DenseArray:
        return self.value.copy()

    # operator sugar, lowered onto the primitives
    def _lift(self, other: Operand) -> "Node":
        if isinstance(other, Node):
            return other
        return self.graph.constant(np.full(self.shape, float(other)))

    def __add__(self, other: Operand) -> "Node":
        return self.graph.add(self, self._lift(other))

    __radd__ = __add__

    def __neg__(self) -> "Node":
        return self.graph.scale(self, -1.0)

    def __sub__(self, other: Operand) -> "Node":
        return self.graph.add(self, -self._lift(other))

    def __rsub__(self, other: Operand) -> "Node":
        return self.graph.add(self._lift(other), -self)

    def __mul__(self, other: Operand) -> "Node":
        if isinstance(other, Node):
            return self.graph.mul(self, other)
        return self.graph.scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Node") -> "Node":
        return self.graph.matmul(self, other)


class CompGraph:
    """Single-writer tape of nodes. Build, call backward once, read gradients."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._params: Dict[str, Node] = {}

    # --- leaves ---
    def _append(
        self,
        op: str,
        parents: Tuple[Node, ...],
        value: DenseArray,
        *,
        requires_grad: Optional[bool] = None,
        name: Optional[str] = None,
        **attrs: Any,
    ) -> Node:
        for p in parents:
            if p.graph is not self:
                raise GraphStructureError(f"{op}: operand node {p.index} belongs to another graph")
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        node = Node(
            graph=self,
            index=len(self.nodes),
            op=op,
            parents=tuple(p.index for p in parents),
            value=value,
            requires_grad=requires_grad,
            name=name,
            attrs=attrs,
        )
        self.nodes.append(node)
        return node

    def param(self, name: str, value: Any) -> Node:
        """Tracked leaf: receives a gradient keyed by ``name``."""
        if name in self._params:
            raise GraphStructureError(f"parameter {name!r} registered twice")
        node = self._append("param", (), as_dense(value, name=name), requires_grad=True, name=name)
        self._params[name] = node
        return node

    def constant(self, value: Any, name: Optional[str] = None) -> Node:
        """Untracked leaf: never receives a gradient."""
        return self._append("input", (), as_dense(value, name=name or "constant"), requires_grad=False, name=name)

    @property
    def params(self) -> Mapping[str, Node]:
        return dict(self._params)

    # --- primitives ---
    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise GraphStructureError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
        return self._append("matmul", (a, b), a.value @ b.value)

    def add(self, a: Node, b: Node) -> Node:
        if a.shape == b.shape:
            broadcast = False
        elif a.value.ndim == 2 and b.value.ndim == 1 and a.shape[1] == b.shape[0]:
            broadcast = True
        else:
            raise GraphStructureError(f"add: incompatible shapes {a.shape} + {b.shape}")
        return self._append("add", (a, b), a.value + b.value, broadcast=broadcast)

    def tanh(self, a: Node) -> Node:
        return self._append("tanh", (a,), np.tanh(a.value))

    def mul(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise GraphStructureError(f"mul: incompatible shapes {a.shape} * {b.shape}")
        return self._append("mul", (a, b), a.value * b.value)

    def scale(self, a: Node, factor: float) -> Node:
        factor = float(factor)
        return self._append("scale", (a,), a.value * factor, factor=factor)

    def sum(self, a: Node, axis: Optional[int] = None) -> Node:
        axis = self._check_axis("sum", a, axis)
        return self._append("sum", (a,), np.asarray(np.sum(a.value, axis=axis), dtype=np.float64), axis=axis)

    def mean(self, a: Node, axis: Optional[int] = None) -> Node:
        axis = self._check_axis("mean", a, axis)
        return self._append("mean", (a,), np.asarray(np.mean(a.value, axis=axis), dtype=np.float64), axis=axis)

    def square(self, a: Node) -> Node:
        return self._append("square", (a,), a.value * a.value)

    def log_sigmoid(self, a: Node) -> Node:
        return self._append("log_sigmoid", (a,), -np.logaddexp(0.0, -a.value))

    def sigmoid(self, a: Node) -> Node:
        return self._append("sigmoid", (a,), _stable_sigmoid(a.value))

    def clip(self, a: Node, lo: float, hi: float) -> Node:
        if lo > hi:
            raise ArgumentError(f"clip: lo={lo} > hi={hi}")
        return self._append("clip", (a,), np.clip(a.value, lo, hi), lo=float(lo), hi=float(hi))

    @staticmethod
    def _check_axis(op: str, a: Node, axis: Optional[int]) -> Optional[int]:
        if axis is None:
            return None
        if a.value.ndim == 0:
            raise GraphStructureError(f"{op}: cannot reduce a scalar along axis {axis}")
        if axis not in (-1, a.value.ndim - 1):
            raise GraphStructureError(f"{op}: only full or last-axis reductions, got axis={axis}")
        return -1

    # --- reverse pass ---
    def backward(self, loss: Node) -> Dict[str, DenseArray]:
        """Accumulate d(loss)/d(node) for every node that requires a gradient.
        Returns gradients for all registered parameters (zeros if unreachable).
        """
        if loss.graph is not self:
            raise GraphStructureError("backward: loss node belongs to another graph")
        if loss.value.size != 1:
            raise GraphStructureError(f"backward: loss must be scalar, got shape {loss.shape}")
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.value)

        for node in reversed(self.nodes[: loss.index + 1]):
            if node.grad is None or not node.requires_grad or not node.parents:
                continue
            parents = [self.nodes[i] for i in node.parents]
            for parent, g in zip(parents, _VJP[node.op](node, parents, node.grad)):
                if not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

        grads: Dict[str, DenseArray] = {}
        for name, node in self._params.items():
            grads[name] = node.grad.copy() if node.grad is not None else np.zeros_like(node.value)
            if grads[name].shape != node.value.shape:
                raise GraphStructureError(f"backward: gradient shape {grads[name].shape} for {name!r} {node.shape}")
        return grads


def _vjp_matmul(node: Node, ps: List[Node], g: DenseArray) -> Tuple[DenseArray, ...]:
    a, b = ps
    return g @ b.value.T, a.value.T @ g


def _vjp_add(node: Node, ps: List[Node], g: DenseArray) -> Tuple[DenseArray, ...]:
    if node.attrs["broadcast"]:
        return g, g.sum(axis=0)
    return g, g


def _vjp_reduce(node: Node, ps: List[Node], g: DenseArray) -> Tuple[DenseArray, ...]:
    (a,) = ps
    axis = node.attrs["axis"]
    if axis is None:
        count = a.value.size
        full = np.broadcast_to(g, a.shape)
    else:
        count = a.shape[-1]
        full = np.broadcast_to(g[..., None], a.shape)
    if node.op == "mean":
        return (full / count,)
    return (np.array(full),)


_VJP: Dict[str, Callable[[Node, List[Node], DenseArray], Tuple[DenseArray, ...]]] = {
    "matmul": _vjp_matmul,
    "add": _vjp_add,
    "tanh": lambda n, ps, g: (g * (1.0 - n.value * n.value),),
    "mul": lambda n, ps, g: (g * ps[1].value, g * ps[0].value),
    "scale": lambda n, ps, g: (g * n.attrs["factor"],),
    "sum": _vjp_reduce,
    "mean": _vjp_reduce,
    "square": lambda n, ps, g: (2.0 * ps[0].value * g,),
    "log_sigmoid": lambda n, ps, g: (g * _stable_sigmoid(-ps[0].value),),
    "sigmoid": lambda n, ps, g: (g * n.value * (1.0 - n.value),),
    "clip": lambda n, ps, g: (g * ((ps[0].value > n.attrs["lo"]) & (ps[0].value < n.attrs["hi"])),),
}


Builder = Callable[[CompGraph, Mapping[str, DenseArray]], Node]


def evaluate(build: Builder, params: Mapping[str, DenseArray]) -> float:
    """Forward pass only."""
    return build(CompGraph(), params).item()


def forward_backward(build: Builder, params: Mapping[str, DenseArray]) -> Tuple[float, Dict[str, DenseArray]]:
    """Build a fresh graph from ``params``, run backward, return (loss, gradients).

    ``build`` must register each entry of ``params`` via ``graph.param(name, value)``
    and return a scalar node. Deterministic for a deterministic ``build``.
    """
    graph = CompGraph()
    loss = build(graph, params)
    grads = graph.backward(loss)
    return loss.item(), grads


def clip_scalar(x: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ArgumentError(f"clip_scalar: lo={lo} > hi={hi}")
    return min(max(float(x), lo), hi)
