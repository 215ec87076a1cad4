"""Trace events, violations and the line-oriented trace file format."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from ..errors import ParseError


class Op(enum.Enum):
    META_READ = "MetaRead"
    META_WRITE = "MetaWrite"
    META_CAS = "MetaCAS"
    BYTE_READ = "ByteRead"
    BYTE_WRITE = "ByteWrite"
    EXPOSE_RO = "ExposeReadOnly"
    EXPOSE_MUT = "ExposeMutable"

    @property
    def is_meta(self) -> bool:
        return self in (Op.META_READ, Op.META_WRITE, Op.META_CAS)


@dataclass(frozen=True)
class TraceEvent:
    """One access. ``loc`` is ``(frame,)`` for metadata ops, ``(lo, hi)`` otherwise."""

    tid: int
    op: Op
    loc: tuple

    def __str__(self):
        args = " ".join(str(x) if self.op.is_meta else hex(x) for x in self.loc)
        return f"{self.tid} {self.op.value} {args}"


def MetaRead(frame, tid=0):
    return TraceEvent(tid, Op.META_READ, (frame,))


def MetaWrite(frame, tid=0):
    return TraceEvent(tid, Op.META_WRITE, (frame,))


def MetaCAS(frame, tid=0):
    return TraceEvent(tid, Op.META_CAS, (frame,))


def ByteRead(lo, hi, tid=0):
    return TraceEvent(tid, Op.BYTE_READ, (lo, hi))


def ByteWrite(lo, hi, tid=0):
    return TraceEvent(tid, Op.BYTE_WRITE, (lo, hi))


def ExposeReadOnly(lo, hi, tid=0):
    return TraceEvent(tid, Op.EXPOSE_RO, (lo, hi))


def ExposeMutable(lo, hi, tid=0):
    return TraceEvent(tid, Op.EXPOSE_MUT, (lo, hi))


class Kind(enum.Enum):
    DATA_RACE = "DataRace"
    MUTABILITY = "MutabilityViolation"
    USE_AFTER_RELEASE = "UseAfterRelease"


@dataclass(frozen=True)
class Violation:
    """A finding plus the schedule that exhibits it.

    ``events`` are indices into the merged event sequence; ``schedule`` is
    the thread order that produced that sequence, enough to replay it.
    """

    kind: Kind
    events: tuple
    schedule: tuple = field(default=(), compare=True)
    location: tuple = ()
    detail: str = ""

    def record(self) -> dict:
        return {
            "kind": self.kind.value,
            "events": list(self.events),
            "location": list(self.location),
            "schedule": list(self.schedule),
            "detail": self.detail,
        }


def format_trace(events: Iterable[TraceEvent]) -> str:
    return "".join(f"{e}\n" for e in events)


def parse_trace(text: str) -> list[TraceEvent]:
    """Parse ``tid op args`` lines; blank lines and ``#`` comments are skipped."""
    ops = {o.value: o for o in Op}
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        parts = body.split()
        col = body.index(parts[0]) + 1
        if len(parts) < 3:
            raise ParseError(f"expected 'tid op args', got {body.strip()!r}", lineno, col)
        try:
            tid = int(parts[0], 0)
        except ValueError:
            raise ParseError(f"bad thread id {parts[0]!r}", lineno, col) from None
        op = ops.get(parts[1])
        if op is None:
            raise ParseError(f"unknown op {parts[1]!r}", lineno, body.index(parts[1]) + 1)
        want = 1 if op.is_meta else 2
        if len(parts) - 2 != want:
            raise ParseError(f"{op.value} takes {want} argument(s)", lineno, body.index(parts[1]) + 1)
        try:
            loc = tuple(int(x, 0) for x in parts[2:])
        except ValueError:
            raise ParseError(f"bad number in {parts[2:]}", lineno, body.index(parts[2]) + 1) from None
        if not op.is_meta and loc[1] < loc[0]:
            raise ParseError("range end before start", lineno, body.index(parts[3]) + 1)
        events.append(TraceEvent(tid, op, loc))
    return events


def split_threads(events: Iterable[TraceEvent]) -> list[list[TraceEvent]]:
    """Per-thread program order, threads sorted by id."""
    by_tid: dict[int, list[TraceEvent]] = {}
    for e in events:
        by_tid.setdefault(e.tid, []).append(e)
    return [by_tid[t] for t in sorted(by_tid)]
