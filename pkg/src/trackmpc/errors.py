"""Exception hierarchy shared by every trackmpc module."""


class TrackMPCError(Exception):
    """Base class for all domain errors raised by the package."""


class SingularMatrix(TrackMPCError):
    pass


class NoConvergence(TrackMPCError):
    pass


class NotPositiveDefinite(TrackMPCError):
    pass


class NotSchur(TrackMPCError):
    pass


class DefectiveBlock(TrackMPCError):
    pass


class SolverFailure(TrackMPCError):
    """Raised when an optimization needed by a set operation does not certify."""


class EmptyInput(TrackMPCError):
    pass


class OriginOutside(TrackMPCError):
    pass


class ShapeNotPD(TrackMPCError):
    pass


class Unbounded(TrackMPCError):
    pass


class ResonantSystem(TrackMPCError):
    pass


class NotFinitelyDetermined(TrackMPCError):
    """The output-admissible-set recursion hit its iteration cap.

    ``iterations`` and ``rows`` carry the state at the cap so callers can
    print a diagnosis.
    """

    def __init__(self, message, iterations=0, rows=0, growth=()):
        super().__init__(message)
        self.iterations = iterations
        self.rows = rows
        self.growth = tuple(growth)


class ValidationFailed(TrackMPCError):
    def __init__(self, report):
        super().__init__("model validation failed: " + ", ".join(report.failed_names()))
        self.report = report


class NoFallback(TrackMPCError):
    """QP infeasible and no previous solution to fall back on."""

    def __init__(self, message, step=None, infeasibility=None):
        super().__init__(message)
        self.step = step
        self.infeasibility = infeasibility


class TheoremViolation(TrackMPCError):
    """A closed-loop guarantee failed at runtime (constraint or feasibility)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(TrackMPCError):
    """Malformed problem configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
