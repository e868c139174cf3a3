"""
Exception hierarchy for wulff-flow.

Two families:
- WulffFlowError subclasses signal bad input or numerical failure (CLI exit 1).
- InvariantViolation subclasses signal that a checked property of the flow or
  of a diagnostic did not hold (CLI exit 2).
"""

from typing import Any


class WulffFlowError(Exception):
    """Base class for every error raised by the package."""

    exit_code: int = 1


# =============================================================================
# Input / configuration errors
# =============================================================================
class ConfigError(WulffFlowError):
    """Scenario configuration failed validation."""

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class ResolutionError(WulffFlowError):
    """Sampled norm resolution is too coarse (or not a power of two)."""


class EllipticityError(WulffFlowError):
    """Norm violates regular ellipticity (min(γ+γ″) ≤ 0) or positivity."""


class GridSpecError(WulffFlowError):
    """Grid spacing or cell limit is invalid."""


class SpecMismatchError(WulffFlowError):
    """Two grid objects were combined but live on different grids."""


class SnapshotFormatError(WulffFlowError):
    """File is not a WFGRID1 snapshot or is truncated."""


class DomainTooSmallError(WulffFlowError):
    """A set reached the two-cell rim of its grid."""


class UndefinedDistanceError(WulffFlowError):
    """Signed distance requested for an empty or full set."""


class StencilInsufficientError(WulffFlowError):
    """Crofton stencil cannot reproduce the norm within the error bound."""

    def __init__(self, message: str, max_error: float):
        self.max_error = max_error
        super().__init__(message)


class SolverError(WulffFlowError):
    """The max-flow solver failed."""

    def __init__(self, message: str, graph_stats: dict[str, Any] | None = None):
        self.graph_stats = graph_stats or {}
        super().__init__(f"{message} (graph: {self.graph_stats})")


# =============================================================================
# Diagnostic errors
# =============================================================================
class NoContourError(WulffFlowError):
    """Contours requested for an empty set."""


class DegeneracyError(WulffFlowError):
    """Contour too short or self-intersecting after smoothing."""


class SmallnessViolationError(WulffFlowError):
    """Normal perturbation is too large to be a graph over the Wulff shape."""


class WindowError(WulffFlowError):
    """Rate-fit window has too few points or nonpositive values."""


# =============================================================================
# Invariant violations (assertion class)
# =============================================================================
class InvariantViolation(WulffFlowError):
    """A property the flow or a diagnostic must satisfy did not hold."""

    exit_code = 2


class DissipationViolation(InvariantViolation):
    """Lyapunov energy increased by more than the recorded slack."""


class MonotonicityViolation(InvariantViolation):
    """Min-cut area was not monotone in the volume multiplier."""


class AcceptanceFailure(InvariantViolation):
    """A scenario-level acceptance check failed."""
