"""Trace events and the line-oriented JSON wire format.

One event per line::

    {"seq":1,"tid":7,"op":"read","target":"/data/eegIDRecord.csv","args":{}}

Top-level fields appear in this fixed order and ``args`` keys are sorted,
so serializing a parsed trace yields its canonical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .errors import MalformedEvent, TraceParseError

TRACE_SUFFIX = ".trace.jsonl"
FIELDS = ("seq", "tid", "op", "target", "args")
U64_MAX = 2**64 - 1


class Op(str, Enum):
    OPEN = "open"
    CLOSE = "close"
    READ = "read"
    WRITE = "write"
    MMAP = "mmap"
    MUNMAP = "munmap"
    MPROTECT = "mprotect"
    CLONE = "clone"
    EXEC = "exec"
    IOCTL = "ioctl"
    SOCK_CREATE = "sock_create"
    SOCK_LISTEN = "sock_listen"
    SOCK_CONNECT = "sock_connect"
    SOCK_SEND = "sock_send"
    SOCK_RECV = "sock_recv"
    PIPE_READ = "pipe_read"
    PIPE_WRITE = "pipe_write"
    PORT_READ = "port_read"
    PORT_WRITE = "port_write"


OP_NAMES = frozenset(op.value for op in Op)


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    tid: int
    op: Op
    target: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.op not in OP_NAMES:
            raise MalformedEvent(f"unknown op {self.op!r}")
        object.__setattr__(self, "op", Op(self.op))

    def to_json(self) -> str:
        try:
            args = json.dumps(self.args, sort_keys=True, separators=(",", ":"),
                              ensure_ascii=False, allow_nan=False)
        except (TypeError, ValueError) as exc:
            raise MalformedEvent(f"seq {self.seq}: args not serializable: {exc}") from None
        return (
            f'{{"seq":{self.seq},"tid":{self.tid},"op":{json.dumps(self.op.value)},'
            f'"target":{json.dumps(self.target, ensure_ascii=False)},"args":{args}}}'
        )


def serialize_trace(events: Iterable[TraceEvent]) -> bytes:
    return "".join(e.to_json() + "\n" for e in events).encode("utf-8")


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def _is_u64(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and 0 <= v <= U64_MAX


def _check_finite(value) -> bool:
    if isinstance(value, float):
        return math.isfinite(value)
    if isinstance(value, dict):
        return all(_check_finite(v) for v in value.values())
    if isinstance(value, list):
        return all(_check_finite(v) for v in value)
    return True


def parse_trace(data: bytes | str) -> list[TraceEvent]:
    """Parse and validate a trace.

    Raises :class:`TraceParseError` carrying the byte offset of the problem:
    the exact position for JSON syntax errors, otherwise the start of the
    offending line. Blank lines are skipped.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    events: list[TraceEvent] = []
    prev_seq: int | None = None
    offset = 0
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        start = offset
        offset += len(raw) + 1

        def fail(reason, at=start):
            raise TraceParseError(at, reason, lineno)

        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            fail(f"invalid UTF-8: {exc.reason}", start + exc.start)
        if not text.strip():
            continue
        try:
            obj = json.loads(text, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            fail(f"invalid JSON: {exc.msg}", start + len(text[: exc.pos].encode("utf-8")))
        except ValueError as exc:
            fail(str(exc))
        if not isinstance(obj, dict):
            fail("expected a JSON object")
        for key in FIELDS:
            if key not in obj:
                fail(f"missing field {key!r}")
        extra = sorted(set(obj) - set(FIELDS))
        if extra:
            fail(f"unknown field {extra[0]!r}")
        seq, tid, op, target, args = (obj[k] for k in FIELDS)
        if not _is_u64(seq):
            fail(f"seq must be an unsigned 64-bit integer, got {seq!r}")
        if not _is_u64(tid):
            fail(f"tid must be an unsigned 64-bit integer, got {tid!r}")
        if not isinstance(op, str) or op not in OP_NAMES:
            fail(f"unknown op {op!r}")
        if not isinstance(target, str):
            fail("target must be a string")
        if not isinstance(args, dict):
            fail("args must be an object")
        if not _check_finite(args):
            fail("args contain a non-finite number")
        if prev_seq is not None:
            if seq == prev_seq:
                fail(f"duplicate seq {seq}")
            if seq < prev_seq:
                fail(f"seq {seq} follows {prev_seq}; seq must strictly increase")
        prev_seq = seq
        events.append(TraceEvent(seq, tid, Op(op), target, args))
    return events


def read_trace(path) -> list[TraceEvent]:
    with open(path, "rb") as fh:
        return parse_trace(fh.read())


def write_trace(path, events: Iterable[TraceEvent]) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_trace(events))
