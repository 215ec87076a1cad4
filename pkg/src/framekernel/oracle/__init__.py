"""Trace-level undefined-behavior oracle.

Traces of metadata and byte accesses are checked for metadata data races
and for writes into memory last exposed as read-only. Concurrency is
simulated: :mod:`~framekernel.oracle.interleave` enumerates the merges of
per-thread event sequences, and every finding carries the schedule that
produced it.
"""

from __future__ import annotations

from typing import Sequence

from .attach import OracleSession, attach
from .detect import MutabilityTracker, RaceDetector, dedupe, detect_all, detect_data_race, detect_mutability
from .events import (
    ByteRead,
    ByteWrite,
    ExposeMutable,
    ExposeReadOnly,
    Kind,
    MetaCAS,
    MetaRead,
    MetaWrite,
    Op,
    TraceEvent,
    Violation,
    format_trace,
    parse_trace,
    split_threads,
)
from .interleave import (
    EXHAUSTIVE_LIMIT,
    count_interleavings,
    explore,
    interleave_enumerate,
    interleave_sample,
    merge,
    run_schedule,
    schedules,
)


class Exploration:
    """Violations found over a set of schedules."""

    def __init__(self, exhaustive: bool):
        self.exhaustive = exhaustive
        self.schedules = 0
        self.flagged = 0
        self.violations: list[Violation] = []

    @property
    def distinct(self) -> list[Violation]:
        return dedupe(self.violations)


def check_interleavings(threads: Sequence[Sequence[TraceEvent]], *, limit: int = EXHAUSTIVE_LIMIT,
                        samples: int = 10_000, seed: int = 0) -> Exploration:
    """Run both detectors over every interleaving (or a sample beyond ``limit``)."""
    it, exhaustive = schedules(threads, limit, samples, seed)
    result = Exploration(exhaustive)
    for sched in it:
        found = detect_all(merge(threads, sched), sched)
        result.schedules += 1
        result.flagged += bool(found)
        result.violations.extend(found)
    return result


def replay(threads: Sequence[Sequence[TraceEvent]], violation: Violation) -> list[Violation]:
    """Re-run the detectors on a violation's witness schedule."""
    return detect_all(merge(threads, violation.schedule), violation.schedule)


__all__ = [
    "ByteRead", "ByteWrite", "EXHAUSTIVE_LIMIT", "Exploration", "ExposeMutable", "ExposeReadOnly", "Kind",
    "MetaCAS", "MetaRead", "MetaWrite", "MutabilityTracker", "Op", "OracleSession", "RaceDetector",
    "TraceEvent", "Violation", "attach", "check_interleavings", "count_interleavings", "dedupe",
    "detect_all", "detect_data_race", "detect_mutability", "explore", "format_trace", "interleave_enumerate",
    "interleave_sample", "merge", "parse_trace", "replay", "run_schedule", "schedules", "split_threads",
]
