"""Exception hierarchy shared by all tcmd modules."""

from __future__ import annotations


class TcmdError(Exception):
    """Base class; the CLI maps every subclass to exit code 2."""


class TermSyntaxError(TcmdError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class NotClosed(TcmdError):
    """A term with free recursion variables reached an operation needing a closed term."""


class RestrictionStuck(TcmdError):
    """No fresh spot satisfied the undefinedness side condition of R10."""


class ServiceUnresolvable(TcmdError):
    """A use(...) term names a service that is not in the registry."""


class FuelExhausted(TcmdError):
    """The rewrite-step budget of a normalization session ran out."""


class InvalidSpec(TcmdError):
    """A state-based service description violates the sink-state condition."""


class ScriptExhausted(TcmdError):
    pass


class ScriptMismatch(TcmdError):
    pass


class TableMiss(TcmdError):
    pass


class SideConditionViolated(TcmdError):
    def __init__(self, spot: str, message: str):
        self.spot = spot
        super().__init__(message)


class NotStabilized(TcmdError):
    pass
