"""Exception types shared across the package."""


class HonuError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HonuError, ValueError):
    """Raised for dimension mismatches, bad lag structures and invalid configs."""


class DivergenceError(HonuError, ArithmeticError):
    """Raised when training or simulation produces a non-finite value.

    ``epoch`` and ``sample`` locate the first offending update (0-based);
    ``history`` carries whatever per-epoch cost trace was recorded before the
    blow-up so callers can still write a partial report.
    """

    def __init__(self, message, epoch=None, sample=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.sample = sample
        self.history = list(history) if history is not None else []

    def __str__(self):
        base = super().__str__()
        where = []
        if self.epoch is not None:
            where.append(f"epoch={self.epoch}")
        if self.sample is not None:
            where.append(f"sample={self.sample}")
        return f"{base} ({', '.join(where)})" if where else base
