class KGStructError(Exception):
    """Base class for all package errors."""


class ParseError(KGStructError, ValueError):
    def __init__(self, message, path=None, lineno=None):
        super().__init__(message)
        self.path = path
        self.lineno = lineno


class ValidationError(KGStructError, ValueError):
    pass


class SplitOverlapError(ValidationError):
    pass


class UnknownIdError(KGStructError, LookupError):
    pass


class TrainingDivergedError(KGStructError, RuntimeError):
    pass


class CheckpointError(KGStructError, ValueError):
    pass
