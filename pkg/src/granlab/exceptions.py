"""Exception types shared across the package."""


class GranlabError(Exception):
    """Base class for all granlab errors."""


class ConfigError(GranlabError, ValueError):
    """Invalid configuration: bad hyperparameters, hierarchies, or flag combinations."""


class DataError(GranlabError, ValueError):
    """Invalid data passed to an operation: empty batches, shape mismatches, bad label rows."""


class ParseError(GranlabError, ValueError):
    """Malformed binary or text input. Messages carry the byte offset or line number."""


class DivergenceError(GranlabError, RuntimeError):
    """Training produced a non-finite loss. Carries the epoch index."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
