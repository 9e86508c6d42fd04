"""Exception hierarchy shared by every module of the package."""


class PneuforceError(Exception):
    """Base class for all errors raised by pneuforce."""


class DomainError(PneuforceError, ValueError):
    """An argument lies outside the domain of an operation."""


class RangeError(DomainError):
    """A reading lies outside the linear range of the transducer."""

    def __init__(self, message, value):
        super().__init__(message)
        self.value = value


class NumericInstabilityError(PneuforceError, ArithmeticError):
    """The integrator produced a non-finite state."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ScheduleError(PneuforceError, ValueError):
    pass


class CalibrationError(PneuforceError):
    """Synthetic calibration failed for a given series and force level."""

    def __init__(self, message, series=None, force_kgf=None):
        super().__init__(message)
        self.series = series
        self.force_kgf = force_kgf


class ParseError(PneuforceError, ValueError):
    """Malformed calibration dataset; carries 1-based line/column coordinates."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column
        self.reason = message


class FitError(PneuforceError, ValueError):
    pass


class DegenerateScaleError(PneuforceError, ZeroDivisionError):
    """A relative error was requested against a zero reference value."""


class BudgetError(PneuforceError, ValueError):
    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__("uncertainty budget inputs missing: " + ", ".join(self.missing))


class ClassificationError(PneuforceError, ValueError):
    pass


class ConfigError(PneuforceError, ValueError):
    pass
