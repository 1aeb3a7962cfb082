"""Exception hierarchy shared by all badhmp modules."""


class BadHMPError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(BadHMPError, ValueError):
    pass


class DegenerateSkeletonError(BadHMPError, ValueError):
    pass


class UnknownLimbError(BadHMPError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class RangeError(BadHMPError, ValueError):
    pass


class HorizonError(BadHMPError, ValueError):
    pass


class EmptyDatasetError(BadHMPError, ValueError):
    pass


class PairingError(BadHMPError, ValueError):
    pass


class ParseError(BadHMPError, ValueError):
    pass


class DivergenceError(BadHMPError, ArithmeticError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")


class UsageError(BadHMPError):
    pass
