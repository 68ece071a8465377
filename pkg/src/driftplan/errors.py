"""Exception types shared across the package."""


class DriftplanError(Exception):
    """Base class for all package errors."""


class SlipDomainError(DriftplanError, ValueError):
    """Slip quantities outside the model domain (lambda <= -1 or |alpha| >= pi/2)."""


class LowSpeedError(DriftplanError, ValueError):
    """Operation divides by v but v < v_eps."""


class DegenerateInputError(DriftplanError, ValueError):
    """(delta, lambda) = (0, 0): every straight-line state is an equilibrium."""


class NoConvergenceError(DriftplanError, RuntimeError):
    """Newton iteration did not reach the residual tolerance."""


class EmptySweepError(DriftplanError, RuntimeError):
    """Equilibrium sweep produced no usable samples."""


class InsufficientSamplesError(DriftplanError, RuntimeError):
    """Fewer than three non-collinear samples; no triangulation possible."""


class OutOfDomainError(DriftplanError, LookupError):
    """Manifold query outside the triangulated domain.

    Recoverable: the planner treats it as a pruned expansion sample.
    """


class ManifoldFormatError(DriftplanError, ValueError):
    """Manifold file is corrupted or has an unknown layout."""


class TrackParseError(DriftplanError, ValueError):
    """Track CSV could not be parsed; message names the offending line."""


class ProjectionError(DriftplanError, ValueError):
    """Pose too far from the centerline for an unambiguous projection."""


class FoldOverError(DriftplanError, ValueError):
    """|d| exceeds the local curvature radius; Frenet frame folds over."""


class InfeasibleStartError(DriftplanError, ValueError):
    """Initial state unusable: pose off-road, or dynamic state neither on
    the manifold nor inside the bicycle-model region."""


class PlannerStarvedError(DriftplanError, RuntimeError):
    """Search could not produce any node beyond the root."""


class ConfigError(DriftplanError, ValueError):
    """Run configuration is missing, malformed, or references absent files."""
