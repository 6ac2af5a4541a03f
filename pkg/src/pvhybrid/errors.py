"""Exception types shared across the package.

Everything derives from ``PvHybridError`` (itself a ``ValueError``) so the CLI
can map data/validation problems to a single exit code.
"""


class PvHybridError(ValueError):
    pass


class InputShapeError(PvHybridError):
    pass


class EmptyInputError(PvHybridError):
    pass


class ParseError(PvHybridError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ArityError(ParseError):
    pass


class SymbolError(ParseError):
    pass


class DivergenceError(PvHybridError):
    def __init__(self, iteration):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration


class PreconditionError(PvHybridError):
    pass


class SchemaError(PvHybridError):
    pass


class OrderingError(PvHybridError):
    def __init__(self, message, row):
        super().__init__(message)
        self.row = row


class AlignmentError(PvHybridError):
    pass


class SplitError(PvHybridError):
    pass


class PlanError(PvHybridError):
    pass


class ConfigError(PvHybridError):
    pass


class StageError(PvHybridError):
    """Wraps an error raised inside one stage of the experiment pipeline."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
