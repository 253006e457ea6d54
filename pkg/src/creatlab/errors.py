"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value or key is invalid."""


class DataFormatError(ValueError):
    """An input file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""


class ContractError(RuntimeError):
    """A caller violated a documented precondition."""


class NumericalError(RuntimeError):
    """A solver or training loop produced non-finite values."""


class DegenerateError(RuntimeError):
    """A solver collapsed to a degenerate state (e.g. an all-zero plan)."""
