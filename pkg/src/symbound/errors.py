class SymboundError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(SymboundError, ValueError):
    pass


class DatasetParseError(SymboundError):
    def __init__(self, message: str, line: int, last_good_line: int):
        super().__init__(f"line {line}: {message} (last good line: {last_good_line})")
        self.line = line
        self.last_good_line = last_good_line


class IntegrityError(SymboundError):
    pass


class NumericError(SymboundError, ArithmeticError):
    pass


class BudgetError(SymboundError):
    pass


class ConfigError(SymboundError, ValueError):
    pass
