"""Exception hierarchy shared by all modules."""


class QValuedError(Exception):
    """Base class for errors raised by this package."""


class InputError(QValuedError, ValueError):
    """Malformed or mismatched input data."""


class ParseError(InputError):
    """A text input could not be parsed.

    ``line`` and ``column`` are 1-based; ``None`` when unknown.
    """

    def __init__(self, message, line=None, column=None, source=None):
        self.line = line
        self.column = column
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ParameterError(QValuedError, ValueError):
    """A numerical parameter violates an operation's precondition."""


class SingularPointError(QValuedError, ValueError):
    """A derivative was requested on the branch set of a field."""


class DegenerateHeightError(QValuedError, ArithmeticError):
    """The smoothed height vanishes, so the frequency is undefined."""

    def __init__(self, message, D=None, H=None):
        self.D = D
        self.H = H
        super().__init__(f"{message} (D={D!r}, H={H!r})")


class CoveringLogicError(QValuedError, RuntimeError):
    """An internal invariant of a covering algorithm was violated."""


class CoverageError(QValuedError, RuntimeError):
    """A covering audit found input points outside every ball."""

    def __init__(self, message, missed=None, audit=None):
        self.missed = missed
        self.audit = audit
        super().__init__(message)
