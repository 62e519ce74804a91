"""Exception hierarchy shared across poisonbench."""


class PoisonBenchError(Exception):
    """Base class for all poisonbench errors."""


class ParseError(PoisonBenchError):
    """A file did not conform to its declared format."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(PoisonBenchError):
    """Data violates a structural invariant (labels out of range, shape mismatch...)."""


class ConfigError(PoisonBenchError):
    """Parameters are inconsistent or out of their allowed range."""


class BudgetError(PoisonBenchError):
    """An attack could not be run with the requested budget."""


class DivergenceError(PoisonBenchError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
