"""Exception hierarchy shared by all rhometric modules."""


class RhoMetricError(ValueError):
    """Base class; every library error is also a ``ValueError``."""


class PointOutsideDomain(RhoMetricError):
    pass


class UnsupportedMode(RhoMetricError):
    pass


class UnsupportedDomain(RhoMetricError):
    pass


class InvalidDigit(RhoMetricError):
    pass


class InvalidRatio(RhoMetricError):
    pass


class ScheduleNotIncreasing(RhoMetricError):
    pass


class OutOfRange(RhoMetricError):
    """A scalar argument (t, level, ...) outside its admissible range."""


class ConstraintViolated(RhoMetricError):
    """Parameter constraints failed; ``constraint`` names the inequality."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        msg = f"constraint violated: {constraint}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DepthExceeded(RhoMetricError):
    pass


class AnchorNotOnBoundary(RhoMetricError):
    pass


class DisconnectedAnchor(RhoMetricError):
    pass


class Unreachable(RhoMetricError):
    pass


class PointsNotInSet(RhoMetricError):
    pass


class EmptyBall(RhoMetricError):
    pass


class ResolutionFloorBreached(RhoMetricError):
    pass


class DegenerateWindow(RhoMetricError):
    pass


class IncompatibleLevel(RhoMetricError):
    pass


class EmptyProfile(RhoMetricError):
    pass


class NonpositiveDenominator(RhoMetricError):
    pass


class InvalidSpec(RhoMetricError):
    pass


class ConfigError(RhoMetricError):
    """Invalid experiment configuration (bad value, unknown key, ...)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownExperiment(RhoMetricError):
    pass
