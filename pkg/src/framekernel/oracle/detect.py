"""Data-race and mutability detectors.

Happens-before is program order plus one synchronizing edge: a MetaCAS on a
frame orders itself before every later MetaCAS or MetaRead on that frame.
Vector clocks carry the transitive closure. Two accesses to one frame race
when at least one is a plain MetaWrite and neither happens before the other.

Mutability is tracked per byte range: the latest exposure of a range decides
whether writes into it are allowed.
"""

from __future__ import annotations

import bisect
from typing import Iterable, Optional, Sequence

from .events import Kind, Op, TraceEvent, Violation


class RaceDetector:
    """Streaming detector; feed events in schedule order."""

    def __init__(self):
        self.clocks: dict[int, dict[int, int]] = {}
        self.sync: dict[int, dict[int, int]] = {}
        # frame -> tid -> (counter, event index) of the latest access / latest plain write
        self.last_any: dict[int, dict[int, tuple[int, int]]] = {}
        self.last_write: dict[int, dict[int, tuple[int, int]]] = {}
        self.n = 0

    @staticmethod
    def _join(into: dict, other: dict) -> None:
        for t, c in other.items():
            if into.get(t, 0) < c:
                into[t] = c

    def feed(self, ev: TraceEvent) -> list[tuple[int, int, int]]:
        """Process one event; returns ``(earlier index, this index, frame)`` per race."""
        idx = self.n
        self.n += 1
        if not ev.op.is_meta:
            return []
        t, op, f = ev.tid, ev.op, ev.loc[0]
        vc = self.clocks.setdefault(t, {})
        vc[t] = vc.get(t, 0) + 1
        if op is not Op.META_WRITE and f in self.sync:
            self._join(vc, self.sync[f])

        races = []
        prior = self.last_any if op is Op.META_WRITE else self.last_write
        for u, (counter, j) in prior.get(f, {}).items():
            if u != t and counter > vc.get(u, 0):
                races.append((j, idx, f))

        stamp = (vc[t], idx)
        self.last_any.setdefault(f, {})[t] = stamp
        if op is Op.META_WRITE:
            self.last_write.setdefault(f, {})[t] = stamp
        elif op is Op.META_CAS:
            self._join(self.sync.setdefault(f, {}), vc)
        return races


class MutabilityTracker:
    """Disjoint painted intervals ``[lo, hi)`` -> (mutable?, exposing event index)."""

    def __init__(self):
        self.starts: list[int] = []
        self.segs: list[tuple[int, int, bool, int]] = []
        self.n = 0

    def _overlapping(self, lo: int, hi: int) -> range:
        i = bisect.bisect_right(self.starts, lo) - 1
        if i < 0 or self.segs[i][1] <= lo:
            i += 1
        j = bisect.bisect_left(self.starts, hi)
        return range(max(i, 0), j)

    def _paint(self, lo: int, hi: int, mutable: bool, idx: int) -> None:
        r = self._overlapping(lo, hi)
        keep = []
        for k in r:
            s_lo, s_hi, m, e = self.segs[k]
            if s_lo < lo:
                keep.append((s_lo, lo, m, e))
            if s_hi > hi:
                keep.append((hi, s_hi, m, e))
        keep.append((lo, hi, mutable, idx))
        keep.sort()
        self.segs[r.start:r.stop] = keep
        self.starts[r.start:r.stop] = [s[0] for s in keep]

    def feed(self, ev: TraceEvent) -> Optional[tuple[int, int, tuple]]:
        """Returns ``(exposure index, write index, (lo, hi))`` for a write into read-only memory."""
        idx = self.n
        self.n += 1
        if ev.op is Op.EXPOSE_RO or ev.op is Op.EXPOSE_MUT:
            lo, hi = ev.loc
            if hi > lo:
                self._paint(lo, hi, ev.op is Op.EXPOSE_MUT, idx)
        elif ev.op is Op.BYTE_WRITE:
            lo, hi = ev.loc
            if hi <= lo:
                return None
            for k in self._overlapping(lo, hi):
                s_lo, s_hi, mutable, e = self.segs[k]
                if not mutable:
                    return (e, idx, (max(lo, s_lo), min(hi, s_hi)))
        return None


def detect_data_race(events: Sequence[TraceEvent], schedule: tuple = ()) -> list[Violation]:
    det = RaceDetector()
    out = []
    for ev in events:
        for i, j, f in det.feed(ev):
            out.append(Violation(Kind.DATA_RACE, (i, j), tuple(schedule), (f,),
                                 f"{events[i]} || {events[j]}"))
    return out


def detect_mutability(events: Sequence[TraceEvent], schedule: tuple = ()) -> list[Violation]:
    tr = MutabilityTracker()
    out = []
    for ev in events:
        hit = tr.feed(ev)
        if hit is not None:
            e, w, rng = hit
            out.append(Violation(Kind.MUTABILITY, (e, w), tuple(schedule), rng,
                                 f"write {events[w]} into read-only exposure {events[e]}"))
    return out


def detect_all(events: Sequence[TraceEvent], schedule: tuple = ()) -> list[Violation]:
    return detect_data_race(events, schedule) + detect_mutability(events, schedule)


def dedupe(violations: Iterable[Violation]) -> list[Violation]:
    """One violation per (kind, location), keeping the first witness."""
    seen = {}
    for v in violations:
        seen.setdefault((v.kind, v.location), v)
    return list(seen.values())
