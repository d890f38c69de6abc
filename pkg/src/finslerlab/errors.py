"""Exception types raised by the library.

Every failure mode that callers are expected to handle gets its own class so
that the CLI can map them to distinct exit codes.
"""


class FinslerError(Exception):
    """Base class for all library errors."""


class ZeroFiberVector(FinslerError):
    """A fiber vector y = 0 was passed where y != 0 is required."""


class NotStronglyConvex(FinslerError):
    """Metric family parameters violate the construction invariants
    (F <= 0 somewhere, Randers drift with |b|_a >= 1, or g not positive
    definite on the sample net)."""


class SingularMetric(FinslerError):
    """The fundamental tensor failed positive-definiteness at a point."""


class LegendreNoConvergence(FinslerError):
    """The fiber Newton iteration for the Legendre transform failed even
    after the brute-force fallback; signals a degenerate metric spec."""


class NonpositiveDensity(FinslerError):
    """The measure density sigma(x) is not strictly positive."""


class InvalidK(FinslerError):
    """Weighted-Ricci parameter k below the manifold dimension."""


class DomainError(FinslerError):
    """Argument outside the mathematical domain of a comparison function."""


class NonSmoothDistance(FinslerError):
    """Distance-function samples fail the smoothness/convexity guard."""


class LeftChart(FinslerError):
    """An integrated path left the configured chart box."""


class ZeroGradientReference(FinslerError):
    """An operator requiring a nonzero reference vector was evaluated where
    the gradient vanishes."""


class NotExpHarmonicAt(FinslerError):
    """Pointwise |exp-harmonic operator| exceeded the gate tolerance for an
    identity that only holds on exponentially harmonic inputs."""


class SupportViolation(FinslerError):
    """A variation field is nonzero on the boundary collar."""


class BoundTooSmall(FinslerError):
    """The b parameter of the H-function does not dominate sup u^2."""


class MaxIterationsExceeded(FinslerError):
    """Solver hit the iteration cap without meeting the tolerance."""


class LineSearchStall(FinslerError):
    """Line search could not produce an energy decrease."""


class CurvatureHypothesisViolated(UserWarning):
    """Sampled curvature hypothesis of the Liouville experiment failed;
    issued as a warning, not an abort."""


class ConfigParseError(FinslerError):
    """Malformed configuration file; message names the offending field."""


class BadPointsRow(FinslerError):
    """Malformed row in a points file; message carries the line number."""
