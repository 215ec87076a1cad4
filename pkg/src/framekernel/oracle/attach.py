"""Live attachment: instrumentation hooks that stream events into the detectors."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Optional

from .detect import MutabilityTracker, RaceDetector
from .events import Kind, Op, TraceEvent, Violation


class OracleSession:
    """Receives one event per metadata/byte operation and checks it on arrival.

    Threads are numbered in order of first appearance. Single-threaded code
    can pretend to be several threads with :meth:`as_thread`.
    """

    def __init__(self):
        self.events: list[TraceEvent] = []
        self.violations: list[Violation] = []
        self._races = RaceDetector()
        self._mut = MutabilityTracker()
        self._lock = threading.Lock()
        self._tids: dict[int, int] = {}
        self._local = threading.local()

    @property
    def tid(self) -> int:
        forced = getattr(self._local, "tid", None)
        if forced is not None:
            return forced
        ident = threading.get_ident()
        tid = self._tids.get(ident)
        if tid is None:
            tid = self._tids[ident] = len(self._tids)
        return tid

    @contextmanager
    def as_thread(self, tid: int):
        prev = getattr(self._local, "tid", None)
        self._local.tid = tid
        try:
            yield self
        finally:
            self._local.tid = prev

    def _emit(self, op: Op, loc: tuple) -> None:
        ev = TraceEvent(self.tid, op, loc)
        with self._lock:
            idx = len(self.events)
            self.events.append(ev)
            for i, j, f in self._races.feed(ev):
                self.violations.append(Violation(Kind.DATA_RACE, (i, j), (), (f,), f"{self.events[i]} || {ev}"))
            hit = self._mut.feed(ev)
            if hit is not None:
                e, w, rng = hit
                self.violations.append(Violation(Kind.MUTABILITY, (e, w), (), rng,
                                                 f"write {ev} into read-only exposure {self.events[e]}"))

    # -- hooks called by the memory model and its clients ---------------------

    def meta_read(self, frame: int) -> None:
        self._emit(Op.META_READ, (frame,))

    def meta_write(self, frame: int) -> None:
        self._emit(Op.META_WRITE, (frame,))

    def meta_cas(self, frame: int) -> None:
        self._emit(Op.META_CAS, (frame,))

    def byte_read(self, lo: int, hi: int) -> None:
        self._emit(Op.BYTE_READ, (lo, hi))

    def byte_write(self, lo: int, hi: int) -> None:
        self._emit(Op.BYTE_WRITE, (lo, hi))

    def expose(self, lo: int, hi: int, mutable: bool = True) -> None:
        self._emit(Op.EXPOSE_MUT if mutable else Op.EXPOSE_RO, (lo, hi))

    def use_after_release(self, frame: int) -> None:
        with self._lock:
            idx = len(self.events)
            self.violations.append(Violation(Kind.USE_AFTER_RELEASE, (idx,), (), (frame,),
                                             f"thread {self.tid} used a dropped handle to frame {frame}"))

    # -- results -------------------------------------------------------------

    def by_kind(self, kind: Kind) -> list[Violation]:
        return [v for v in self.violations if v.kind is kind]


@contextmanager
def attach(*mems, session: Optional[OracleSession] = None):
    """Instrument the given memory maps for the duration of the block."""
    session = session or OracleSession()
    previous = [m.tracer for m in mems]
    for m in mems:
        m.tracer = session
    try:
        yield session
    finally:
        for m, prev in zip(mems, previous):
            m.tracer = prev
