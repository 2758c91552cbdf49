"""Exception hierarchy shared across the package."""


class DictNmtError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(DictNmtError):
    """A file does not follow its expected on-disk format."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class AlignmentError(DictNmtError):
    """Parallel files disagree on line counts."""


class ConfigurationError(DictNmtError):
    """An experiment or model configuration is inconsistent."""


class DivergenceError(DictNmtError):
    """Training produced a non-finite loss."""


class StageError(DictNmtError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
