"""Exception hierarchy shared by all modules."""


class FiberDensityError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FiberDensityError):
    """Inputs live on the wrong space or are otherwise malformed."""


class HypothesisViolation(FiberDensityError):
    """A theorem hypothesis (density, domination, separation) fails on the instance.

    ``condition`` names the failing hypothesis, ``point`` the offending point
    when there is one.
    """

    def __init__(self, message, condition=None, point=None):
        super().__init__(message)
        self.condition = condition
        self.point = point


class BudgetUnreachable(FiberDensityError):
    """An approximation stage could not meet its error budget."""

    def __init__(self, stage, required, achieved, detail=""):
        msg = f"stage {stage!r}: required {required:.6g}, achieved {achieved:.6g}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.stage = stage
        self.required = required
        self.achieved = achieved


class ResolutionError(FiberDensityError):
    """A geometric construction would need a finer grid than supported."""


class LevelTooCoarse(FiberDensityError):
    """A thickened box would wrap around a circular axis."""


class PreconditionViolation(FiberDensityError):
    """An operation was called outside its documented domain."""
