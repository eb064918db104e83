"""Exception hierarchy shared by every stage of the FDPN pipeline."""


class FDPNError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class ValidationFailure(FDPNError):
    """Bad input, bad arguments or bad files. Maps to CLI exit code 2."""

    exit_code = 2


class ManifestParseError(ValidationFailure):
    def __init__(self, line_num: int, message: str):
        self.line_num = line_num
        super().__init__(f"manifest line {line_num}: {message}")


class ValidationError(ValidationFailure):
    def __init__(self, video_id: str, message: str):
        self.video_id = video_id
        super().__init__(f"video {video_id}: {message}")


class UsageError(ValidationFailure):
    pass


class ArgumentError(ValidationFailure, ValueError):
    pass


class ShapeError(ValidationFailure, ValueError):
    pass


class FormatError(ValidationFailure):
    pass


class PreconditionError(ValidationFailure):
    pass


class ReadError(ValidationFailure):
    """Input file missing or unreadable."""


class ConfigError(ValidationFailure):
    pass


class CheckpointError(ValidationFailure):
    pass


class UndefinedMetricError(ValidationFailure):
    pass


class TrainingAbortedError(FDPNError):
    def __init__(self, component: str, value: float, step: int = -1):
        self.component = component
        self.value = value
        self.step = step
        where = f" at step {step}" if step >= 0 else ""
        super().__init__(f"non-finite loss component {component}={value}{where}")


class WriteError(FDPNError):
    pass
