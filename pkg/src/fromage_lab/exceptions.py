"""
Custom exceptions for fromage-lab.
"""

from __future__ import annotations

from typing import Any


class FromageLabError(Exception):
    """Base exception for fromage-lab operations."""

    pass


class ShapeMismatchError(FromageLabError, ValueError):
    """Raised when two operands do not conform."""

    def __init__(self, message: str, *shapes: tuple[int, ...]) -> None:
        self.shapes = shapes
        if shapes:
            message = f"{message}: " + " vs ".join(str(s) for s in shapes)
        super().__init__(message)


class NonFiniteError(FromageLabError, ValueError):
    """Raised when NaN or Inf shows up where finite values are required."""

    pass


class ConvergenceError(FromageLabError):
    """Raised when an iterative spectral routine hits its iteration cap."""

    def __init__(self, shape: tuple[int, ...], iterations: int) -> None:
        self.shape = shape
        self.iterations = iterations
        super().__init__(
            f"singular value iteration did not converge for a {shape[0]}x{shape[1]} "
            f"matrix after {iterations} sweeps"
        )


class EmptyBatchError(FromageLabError, ValueError):
    """Raised when a loss is requested on a batch with no examples."""

    pass


class LabelRangeError(FromageLabError, ValueError):
    """Raised when a class label falls outside [0, num_classes)."""

    pass


class BoundUndefinedError(FromageLabError, ValueError):
    """Raised when a relative quantity has a zero denominator."""

    pass


class TransmissionError(FromageLabError, ValueError):
    """Raised when the lower transmission constant alpha is zero."""

    pass


class ConditioningError(FromageLabError, ValueError):
    """Raised when a matrix exceeds the stated condition-number cap."""

    def __init__(self, name: str, kappa: float, cap: float) -> None:
        self.name = name
        self.kappa = kappa
        self.cap = cap
        super().__init__(f"{name} has condition number {kappa:.6g} > cap {cap:.6g}")


class ZeroGradientError(FromageLabError, ValueError):
    """Raised when a layer gradient is zero but a relative change is requested."""

    def __init__(self, layer: int) -> None:
        self.layer = layer
        super().__init__(f"gradient of layer {layer} is zero; relative change undefined")


class IdxFormatError(FromageLabError):
    """Raised when an IDX file is malformed."""

    def __init__(self, path: Any, offset: int, reason: str) -> None:
        self.path = path
        self.offset = offset
        self.reason = reason
        super().__init__(f"{path}: {reason} at byte offset {offset}")


class CheckpointError(FromageLabError):
    """Raised when a network checkpoint cannot be read or written."""

    pass


class ConfigError(FromageLabError):
    """Raised when a run configuration is invalid."""

    pass
