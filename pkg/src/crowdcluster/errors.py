"""Exception hierarchy shared by all modules."""


class CrowdClusterError(ValueError):
    """Base class for every error raised on bad input or configuration."""


class ParseError(CrowdClusterError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(CrowdClusterError):
    pass


class DuplicateError(ValidationError):
    pass


class InvalidInputError(CrowdClusterError):
    pass


class ConfigError(CrowdClusterError):
    pass


class ConsistencyError(CrowdClusterError):
    pass


class ShapeError(CrowdClusterError):
    pass


class ModelFormatError(CrowdClusterError):
    pass


class SpecError(CrowdClusterError):
    pass


class StageError(CrowdClusterError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
