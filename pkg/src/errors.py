"""Exception types shared across the forecasting stack."""
from typing import Optional


class PESDError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(PESDError, ValueError):
    """Operand extents do not fit the operation."""


class NumericError(PESDError, ArithmeticError):
    """Non-finite values or an exact-zero divisor were produced."""


class DivergenceError(NumericError):
    """Training produced non-finite values and was aborted."""

    def __init__(self, message: str, last_good_checkpoint: Optional[str] = None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint


class DataLoadError(PESDError, ValueError):
    """A dataset file could not be turned into a SeriesDataset."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(PESDError, ValueError):
    """Configuration values are inconsistent or out of range."""
