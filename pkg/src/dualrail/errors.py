"""Exception hierarchy shared by every stage of the toolchain."""

from __future__ import annotations


class DualRailError(Exception):
    """Base class for all errors raised by :mod:`dualrail`."""


class SchemaError(DualRailError):
    """The input document does not have the expected shape."""

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(DualRailError):
    """A well-formed document breaks a diagram invariant.

    ``problems`` holds one ``(identifier, message)`` pair per violation so
    callers can report all of them at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("diagram", problems)]
        self.problems = list(problems)
        super().__init__("; ".join(f"{ident}: {msg}" for ident, msg in self.problems))


class MissingRate(DualRailError, KeyError):
    def __init__(self, symbol: str):
        self.symbol = symbol
        DualRailError.__init__(self, f"rate table has no entry for {symbol!r}")

    def __str__(self) -> str:
        return self.args[0]


class UnsupportedBlock(DualRailError):
    pass


class UnknownRate(DualRailError, KeyError):
    def __init__(self, names):
        self.names = sorted(names)
        DualRailError.__init__(self, f"no reaction carries rate(s) {', '.join(self.names)}")

    def __str__(self) -> str:
        return self.args[0]


class UnsupportedReaction(DualRailError):
    pass


class NotIrreducible(DualRailError):
    pass


class NoConvergence(DualRailError):
    """An iterative solver hit its cap.

    The last iterate and its residual are kept for diagnostics.
    """

    def __init__(self, message: str, last=None, residual: float | None = None, details=None):
        self.last = last
        self.residual = residual
        self.details = details or {}
        super().__init__(message)


class StepUnderflow(DualRailError):
    """The integrator could not take a step (usually stiffness)."""

    def __init__(self, message: str, t: float, state=None):
        self.t = t
        self.state = state
        super().__init__(f"{message} (t={t:.6g} s)")
