"""Exception hierarchy shared by the engine and the signal lab."""

from __future__ import annotations


class FlowGuardError(Exception):
    """Base class for every error raised by this package."""


# labels / registry

class CapacityExceeded(FlowGuardError):
    pass


class UnknownTag(FlowGuardError):
    pass


class TagKindCollision(FlowGuardError, ValueError):
    """A tag name is already bound to a tag of the other kind."""


class CapabilityDenied(FlowGuardError):
    pass


# object model

class DuplicateName(FlowGuardError):
    pass


class UnknownObject(FlowGuardError):
    pass


class OverlapError(FlowGuardError):
    pass


class DomainsExhausted(FlowGuardError):
    pass


class NotOwner(FlowGuardError):
    pass


class UnknownRegion(FlowGuardError):
    pass


class UnknownTid(FlowGuardError):
    pass


# monitor / traces

class MalformedEvent(FlowGuardError, ValueError):
    pass


class ReplayAborted(FlowGuardError):
    """Replay stopped at a malformed event.

    ``summary`` holds the decisions made before the failure and
    ``position`` the index of the offending event in the trace.
    """

    def __init__(self, cause: MalformedEvent, summary, position: int):
        super().__init__(f"event #{position}: {cause}")
        self.cause = cause
        self.summary = summary
        self.position = position


class ParseError(FlowGuardError, ValueError):
    pass


class TraceParseError(ParseError):
    def __init__(self, offset: int, reason: str, line: int | None = None):
        where = f"byte {offset}" if line is None else f"line {line}, byte {offset}"
        super().__init__(f"{where}: {reason}")
        self.offset = offset
        self.reason = reason
        self.line = line


class PolicyParseError(ParseError):
    def __init__(self, reason: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.reason = reason
        self.line = line
        self.column = column


# api session

class AlreadyEnabled(FlowGuardError):
    pass


class NotEnabled(FlowGuardError):
    pass


class OutOfRegion(FlowGuardError):
    pass


class DoubleFree(FlowGuardError):
    pass


class UnknownRole(FlowGuardError):
    pass


# signal lab

class ShapeMismatch(FlowGuardError, ValueError):
    pass


class InvalidParams(FlowGuardError, ValueError):
    pass


class TauOutOfRange(FlowGuardError, ValueError):
    pass


class ConvergenceFailure(FlowGuardError):
    pass


class BadWindow(FlowGuardError, ValueError):
    pass


class BadOrder(FlowGuardError, ValueError):
    pass
