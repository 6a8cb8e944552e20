"""Exception types raised by eptrace.

Fatal conditions raise one of the classes below. Conditions that carry
information rather than failure (a near-defective eigenpair, a fixed-point
iteration that did not settle, an ambiguous branch match, an energy close
to a pole) are reported as flags on the returned objects and collected as
warnings by the CLI; the matching exception classes exist so that callers
asking for strict behaviour can raise them.
"""


class EptraceError(Exception):
    """Base class for all eptrace errors."""


class DimensionMismatch(EptraceError, ValueError):
    """Array shapes are inconsistent with each other."""


class NonConvergence(EptraceError):
    """An iterative solver hit its cap without meeting its tolerance.

    ``worst_residual`` holds the largest residual seen.
    """

    def __init__(self, msg, worst_residual=float("nan")):
        super().__init__(msg)
        self.worst_residual = worst_residual


class Singular(EptraceError):
    """Linear system is numerically singular (pivot below threshold)."""


class NearDefective(EptraceError):
    """Eigenpair with vanishing c-norm, i.e. close to an exceptional point."""


class BandEdge(EptraceError, ValueError):
    """Energy lies on (or numerically at) a channel band edge."""


class DegenerateInput(EptraceError, ValueError):
    """Input parameters are degenerate for the requested operation."""


class LeftDomain(EptraceError):
    """Search left its parameter rectangle (or started outside it)."""

    def __init__(self, msg, point=None):
        super().__init__(msg)
        self.point = point


class StalledAtNonzeroGap(EptraceError):
    """EP search stopped making progress with a finite eigenvalue gap.

    Usually an avoided crossing. ``candidate`` is the best point found.
    """

    def __init__(self, msg, candidate=None):
        super().__init__(msg)
        self.candidate = candidate

    @property
    def gap(self):
        return None if self.candidate is None else self.candidate.gap


class AmbiguousMatching(EptraceError):
    """Branch assignment between consecutive path points is unreliable."""


class PoleProximity(EptraceError):
    """Energy is too close to a pole of the Green function."""


class SchemaError(EptraceError, ValueError):
    """Configuration document failed validation.

    ``pointer`` is the JSON pointer to the offending key.
    """

    def __init__(self, msg, pointer=""):
        super().__init__(f"{pointer or '/'}: {msg}")
        self.pointer = pointer
        self.reason = msg


class ZeroVector(EptraceError, ValueError):
    """Vector with zero Hermitian norm where a direction is required."""
