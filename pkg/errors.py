"""Exception types shared by every stage of the sensor selection pipeline.

Each error carries the process exit code the CLI reports for it:
2 for bad input or usage, 1 for a computation that could not finish.
"""


class SensorSelectionError(Exception):
    """Base class for all pipeline errors."""
    exit_code = 1


# ---- input / usage (exit code 2) ----

class SchemaError(SensorSelectionError):
    exit_code = 2


class ShapeError(SensorSelectionError):
    exit_code = 2


class DataError(SensorSelectionError):
    exit_code = 2


class ConflictError(SensorSelectionError):
    exit_code = 2


class JoinError(SensorSelectionError):
    exit_code = 2


class ConfigError(SensorSelectionError):
    exit_code = 2


class ParameterError(SensorSelectionError):
    exit_code = 2


class UsageError(SensorSelectionError):
    exit_code = 2


class SpecError(SensorSelectionError):
    exit_code = 2


# ---- computation (exit code 1) ----

class SingularityError(SensorSelectionError):
    """Zero within-state scatter; the channel is flagged, not scored."""

    def __init__(self, message, channel=None):
        super().__init__(message)
        self.channel = channel


class ModelError(SensorSelectionError):
    def __init__(self, message, dmu_id=None):
        super().__init__(message)
        self.dmu_id = dmu_id


class IterationLimitError(SensorSelectionError):
    pass


class AssemblyError(SensorSelectionError):
    pass


class TrainingError(SensorSelectionError):
    pass


class SplitError(SensorSelectionError):
    pass


class InternalError(SensorSelectionError):
    pass
