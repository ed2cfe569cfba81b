"""Exception types; the CLI maps each family onto its exit code."""


class TabTError(Exception):
    exit_code = 1


class ConfigError(TabTError, ValueError):
    exit_code = 2


class DataError(TabTError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    pass


class TrainingError(TabTError, RuntimeError):
    exit_code = 4


class FingerprintError(TrainingError):
    """A checkpoint was produced against a different schema than the one supplied."""


class EvaluationError(TabTError, RuntimeError):
    exit_code = 5
