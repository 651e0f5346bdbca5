"""Exceptions raised by lcta.

Data problems subclass ``ValueError`` so callers can keep catching the builtin.
"""


class LCTAError(Exception):
    """Base class for all lcta errors."""


class ParseError(LCTAError, ValueError):
    """A cell or label code could not be parsed.

    Attributes:
        row (int | None): 1-based data row of the offending value.
        column (int | None): 1-based item column of the offending value.
    """

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class IntegrityError(LCTAError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class DomainError(LCTAError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(LCTAError, ArithmeticError):
    """The likelihood became non-finite during estimation."""
