"""Exception hierarchy shared by all gaitloop modules."""


class GaitloopError(Exception):
    """Base class for every error raised by this package."""


class OrderingError(GaitloopError):
    """A sample arrived with a timestamp not newer than the buffered ones."""


class SampleDataError(GaitloopError):
    """A sample carries NaN or otherwise unusable values."""


class InsufficientDataError(GaitloopError):
    pass


class UnboundedStrideError(GaitloopError):
    """No stance anchor could be found on one side of a swing."""


class DegenerateTrainingDataError(GaitloopError):
    pass


class UninitializedModelError(GaitloopError):
    pass


class InfeasibleGaitError(GaitloopError):
    pass


class NoBaselineError(GaitloopError):
    pass


class ConfigError(GaitloopError):
    pass


class SessionStageError(GaitloopError):
    """Wraps a failure inside run_session with the name of the failing stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"session aborted during {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause
