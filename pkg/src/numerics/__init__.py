from src.numerics.arrays import DenseArray, as_dense, from_flat, require_finite
from src.numerics.graph import CompGraph, Node, clip_scalar, evaluate, forward_backward
from src.numerics.gradcheck import GradCheckReport, grad_check
from src.numerics.optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "CompGraph",
    "DenseArray",
    "GradCheckReport",
    "Node",
    "adam_step",
    "as_dense",
    "clip_scalar",
    "evaluate",
    "forward_backward",
    "from_flat",
    "grad_check",
    "require_finite",
]
