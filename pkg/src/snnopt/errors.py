"""Structured error types shared by every module.

Each error carries an ``exit_code`` so the command-line front end can map
failures to process exit statuses without inspecting messages.
"""

from __future__ import annotations


class SnnOptError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DimensionError(SnnOptError, ValueError):
    """Operands have incompatible shapes."""


class RangeError(SnnOptError, ValueError):
    """A vector lies outside the range required by an operation."""


class ConvergenceError(SnnOptError, RuntimeError):
    """An iterative routine hit its iteration cap."""


class DivergenceError(SnnOptError, RuntimeError):
    """A spike cascade did not settle within the allowed number of rounds."""

    exit_code = 3


class DegeneracyError(SnnOptError, ValueError):
    """No consistent decomposition exists, usually because A is degenerate."""


class CapExceededError(SnnOptError, RuntimeError):
    """An enumeration would exceed its configured cap."""

    exit_code = 5


class InfeasibleError(SnnOptError, ValueError):
    """The linear system Ax = b has no exact solution."""


class MissingDiagnosticsError(SnnOptError, ValueError):
    """A checker was handed a trace recorded without diagnostics."""


class ParseError(SnnOptError, ValueError):
    """An input file is malformed; ``line`` is 1-based when known."""

    exit_code = 2

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)
