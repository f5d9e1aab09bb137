"""Exception hierarchy shared across the package."""


class GazeFuseError(Exception):
    """Base class for all package errors."""


class ShapeError(GazeFuseError, ValueError):
    pass


class ConfigError(GazeFuseError, ValueError):
    pass


class UsageError(GazeFuseError, RuntimeError):
    pass


class NumericalError(GazeFuseError, ArithmeticError):
    pass


class ParseError(GazeFuseError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(GazeFuseError, ValueError):
    pass


class InvalidDistributionError(GazeFuseError, ValueError):
    pass


class TrainingDivergedError(NumericalError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, batch: int, param_norms: dict[str, float]):
        self.epoch = epoch
        self.batch = batch
        self.param_norms = param_norms
        worst = sorted(param_norms.items(), key=lambda kv: -kv[1])[:5]
        summary = ", ".join(f"{k}={v:.3g}" for k, v in worst)
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}; largest parameter norms: {summary}")
