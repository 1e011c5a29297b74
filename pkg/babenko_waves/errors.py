"""
Exception hierarchy for babenko_waves.

Usage errors (bad sizes, r >= 1, invalid config) are plain ValueError.
Everything derived from BabenkoError is a numerical failure and maps to
exit status 2 in the CLI.
"""

from typing import Any, Optional


class BabenkoError(RuntimeError):
    """Base class for numerical failures."""

    def __init__(self, message: str, partial: Optional[Any] = None):
        super().__init__(message)
        # Last good object (usually a Branch) preserved for the caller
        self.partial = partial


class NoConvergence(BabenkoError):
    """Newton iteration hit its cap or produced non-finite iterates."""

    def __init__(
        self,
        message: str,
        iterate: Optional[Any] = None,
        residual_norm: float = float("nan"),
        partial: Optional[Any] = None,
    ):
        super().__init__(message, partial=partial)
        self.iterate = iterate
        self.residual_norm = residual_norm


class SingularJacobian(BabenkoError):
    """Augmented Newton matrix condition number exceeded the limit."""

    def __init__(
        self,
        message: str,
        condition: float = float("inf"),
        iterate: Optional[Any] = None,
        partial: Optional[Any] = None,
    ):
        super().__init__(message, partial=partial)
        self.condition = condition
        self.iterate = iterate


class FallbackToHost(BabenkoError):
    """Branch switching re-converged onto the host branch for every attempt."""


class InvertibilityFailed(BabenkoError):
    """Surface x(t) is not monotone, so eta(x) cannot be formed."""


class NonPositiveDepth(BabenkoError):
    """Mean depth h = B - ln r came out non-positive."""


class FormatVersionMismatch(ValueError):
    """Branch file was written by an incompatible format version (user error)."""
