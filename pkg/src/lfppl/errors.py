"""Exception hierarchy shared by every stage of the toolchain."""


class LFPPLError(Exception):
    """Base class for all errors raised by lfppl."""


class SourceError(LFPPLError):
    """An error tied to a location in program text."""

    def __init__(self, message, pos=None):
        self.pos = pos
        if pos is not None:
            message = f"{message} (line {pos[0]}, column {pos[1]})"
        super().__init__(message)


class LexError(SourceError):
    pass


class ParseError(SourceError):
    pass


class DesugarError(SourceError):
    """Unsupported sugar or invalid literal data (e.g. categorical weights)."""


class CompileError(LFPPLError):
    pass


class EvaluationError(LFPPLError, ValueError):
    """Numeric evaluation failed (unbound name, domain error, bad parameters)."""


class PartitionError(EvaluationError):
    """Zero or several indicator products were active at one point."""


class ZeroDensityError(EvaluationError):
    pass


class InitializationError(LFPPLError):
    pass
