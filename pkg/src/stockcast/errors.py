"""Exception hierarchy.

``ValidationError`` subclasses signal bad input (CLI exit code 1);
everything else under ``StockcastError`` is a runtime failure (exit code 2).
"""


class StockcastError(Exception):
    pass


class ValidationError(StockcastError):
    pass


# market_data

class MalformedHeader(ValidationError):
    pass


class MalformedRow(ValidationError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class OhlcViolation(ValidationError):
    def __init__(self, date, reason: str = "low/high bounds violated"):
        super().__init__(f"{date}: {reason}")
        self.date = date


class DuplicateDate(ValidationError):
    def __init__(self, date):
        super().__init__(f"duplicate date {date}")
        self.date = date


class EmptyRange(ValidationError):
    pass


# indicators

class SeriesTooShort(ValidationError):
    pass


class InvalidWindow(ValidationError):
    pass


# tweet_store

class MalformedLine(ValidationError):
    def __init__(self, line: int, reason: str = "not a JSON object"):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class MissingField(ValidationError):
    def __init__(self, name: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}missing field {name!r}")
        self.name = name
        self.line = line


class NegativeCount(ValidationError):
    def __init__(self, field: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}negative value for {field!r}")
        self.field = field
        self.line = line


class LengthMismatch(ValidationError):
    pass


# sentiment

class EmptyLexicon(ValidationError):
    pass


# features

class CalendarMismatch(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class UnfittedScaler(StockcastError):
    pass


class EmptySplit(ValidationError):
    pass


# neural / trainer

class DimensionMismatch(StockcastError):
    pass


class StaleTape(StockcastError):
    pass


class NonFiniteGradient(StockcastError):
    pass


class EmptyInput(ValidationError):
    pass


class Diverged(StockcastError):
    """Training produced a non-finite loss.

    ``params`` holds the last parameters for which every loss was finite.
    """

    def __init__(self, epoch: int, params=None, records=None):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch
        self.params = params
        self.records = records or []


# collector

class TransportError(StockcastError):
    pass


class SinkError(StockcastError):
    pass


class RestartsExhausted(StockcastError):
    def __init__(self, state):
        super().__init__(f"restart budget exhausted: {state.last_error}")
        self.state = state


# cli

class MissingRun(ValidationError):
    pass
