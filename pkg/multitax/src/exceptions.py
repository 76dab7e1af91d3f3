"""Error types raised by multitax services and mapped to CLI exit codes."""
from typing import Any, Optional, Sequence


class MultitaxError(Exception):
    """Base class for every error raised on purpose by the package."""

    exit_code = 3


class DomainError(MultitaxError, ValueError):
    """A scalar lies outside the domain of the model map (α ≤ 0, x < 0, w ≤ ζ …)."""


class ArgumentError(MultitaxError, ValueError):
    """Inputs are structurally wrong: shape mismatch, malformed LP, bad grid sizes."""


class NumericError(MultitaxError, ArithmeticError):
    """A numerical routine failed. ``residual`` carries the last residual if known."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(NumericError):
    """An iteration cap was hit. ``history`` holds the per-iteration diagnostics."""

    def __init__(
        self,
        message: str,
        history: Optional[Sequence[Any]] = None,
        residual: Optional[float] = None,
    ):
        super().__init__(message, residual=residual)
        self.history = list(history or [])


class PlannerInfeasibleError(NumericError):
    """The approximate planner LP has no feasible point (promised welfare vs boxes)."""


class ResourceError(MultitaxError):
    """A size cap was exceeded (tangent lines, dense simplex tableau)."""


class ConfigError(MultitaxError, ValueError):
    exit_code = 2


class RecordFormatError(MultitaxError, OSError):
    """Worker record file is empty or has too many malformed rows."""

    exit_code = 4

    def __init__(self, message: str, bad_lines: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.bad_lines = list(bad_lines or [])


class BundleError(MultitaxError, OSError):
    """Solution bundle or checkpoint is missing a file or a column."""

    exit_code = 4
