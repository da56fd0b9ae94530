"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the region where a model is defined."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite intermediate value."""

    def __init__(self, symbol, value):
        super().__init__(f"non-finite value for {symbol}: {value!r}")
        self.symbol = symbol
        self.value = value


class FitError(RuntimeError):
    """A fit could not produce a meaningful estimate."""


class ParseError(ValueError):
    """Malformed input data, with the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
