"""Exception hierarchy shared by every sdpo-lab module."""
from __future__ import annotations

from typing import Any, Dict, List, Optional


class LabError(Exception):
    """Base class for errors raised by the lab."""


class ArgumentError(LabError, ValueError):
    """A precondition or bounds check failed."""


class GraphStructureError(LabError):
    """Nodes with incompatible shapes were connected in a CompGraph."""


class DomainError(LabError, ArithmeticError):
    """A formula was evaluated where it divides by zero."""


class NonFiniteError(LabError, FloatingPointError):
    """A NaN or Inf showed up where a finite value is promised."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details: Dict[str, Any] = details or {}


class ConfigError(LabError):
    """The experiment config failed validation."""

    def __init__(self, message: str, fields: Optional[List[str]] = None):
        super().__init__(message)
        self.fields: List[str] = fields or []


class UsageError(LabError):
    """The command line was malformed: unknown flag, missing --seed, bad value."""
