"""Exception hierarchy shared by the geometry, training and CLI layers."""
from __future__ import annotations

from typing import Any


class RiemannFlowError(Exception):
    """Base class for every error raised by riemann_flow."""


class DomainViolation(RiemannFlowError, ValueError):
    """A point or tangent left the valid domain of the curvature-c model."""

    def __init__(self, message: str, partial: Any = None) -> None:
        super().__init__(message)
        self.partial = partial


class BaseMismatch(RiemannFlowError, ValueError):
    """A tangent vector was used at a base point it does not belong to."""


class ShapeMismatch(RiemannFlowError, ValueError):
    """Operand shapes or dimensions are incompatible."""


DimensionMismatch = ShapeMismatch


class InvalidCurvature(RiemannFlowError, ValueError):
    pass


class DegenerateRadius(RiemannFlowError, ValueError):
    pass


class LabelOutOfRange(RiemannFlowError, ValueError):
    pass


class BatchSizeMismatch(RiemannFlowError, ValueError):
    pass


class EmptyBatch(RiemannFlowError, ValueError):
    pass


class EmptyGraph(RiemannFlowError, ValueError):
    pass


class EmptyLog(RiemannFlowError, ValueError):
    pass


class InvalidSpec(RiemannFlowError, ValueError):
    pass


class IndexOutOfRange(RiemannFlowError, ValueError):
    pass


class NonScalarLoss(RiemannFlowError, ValueError):
    pass


class NonFinite(RiemannFlowError, ArithmeticError):
    """A forward value or a simulated state became NaN or infinite.

    ``partial`` carries whatever was produced before the abort: a partial
    trajectory, or the path of the last checkpoint written by training.
    """

    def __init__(self, message: str, partial: Any = None) -> None:
        super().__init__(message)
        self.partial = partial


class ConvergenceFailure(RiemannFlowError, ArithmeticError):
    pass


class ConfigError(RiemannFlowError, ValueError):
    pass


class ParseError(RiemannFlowError, ValueError):
    """Malformed graph file; ``line`` is 1-based."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


__all__ = [
    "BaseMismatch",
    "BatchSizeMismatch",
    "ConfigError",
    "ConvergenceFailure",
    "DegenerateRadius",
    "DimensionMismatch",
    "DomainViolation",
    "EmptyBatch",
    "EmptyGraph",
    "EmptyLog",
    "IndexOutOfRange",
    "InvalidCurvature",
    "InvalidSpec",
    "LabelOutOfRange",
    "NonFinite",
    "NonScalarLoss",
    "ParseError",
    "RiemannFlowError",
    "ShapeMismatch",
]
