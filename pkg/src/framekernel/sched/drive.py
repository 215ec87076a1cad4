"""Drivers that decide which CPU ticks next.

The deterministic drivers check the single-run invariant after every step.
:func:`run_threads` uses one OS thread per simulated CPU for stress runs.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from . import Sched


@dataclass(frozen=True)
class Step:
    """``tick`` on ``arg`` = cpu, or ``wake`` of task ``arg``."""

    verb: str
    arg: int

    def __str__(self):
        return f"{self.verb} {self.arg}"


@dataclass
class DriveResult:
    steps: list[Step] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)
    states_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems


def choices(sched: Sched) -> list[Step]:
    """Every step enabled in the current state."""
    out = [Step("tick", c) for c in range(sched.ncpus)]
    out += [Step("wake", t.id) for t in sched.tasks.values() if not t.runnable and not t.exited]
    return out


def apply(sched: Sched, step: Step) -> None:
    if step.verb == "tick":
        sched.tick(step.arg)
    elif step.verb == "wake":
        sched.wake(step.arg)
    else:
        raise ValueError(f"unknown step {step}")


def finished(sched: Sched) -> bool:
    return all(t.exited for t in sched.tasks.values())


def run_random(sched: Sched, steps: int, seed: int = 0, wake_p: float = 0.2) -> DriveResult:
    """Random ticks across CPUs with occasional wakes; checks every state."""
    rng = random.Random(seed)
    res = DriveResult()
    for _ in range(steps):
        sleepers = [t.id for t in sched.tasks.values() if not t.runnable and not t.exited]
        if sleepers and rng.random() < wake_p:
            step = Step("wake", rng.choice(sleepers))
        else:
            step = Step("tick", rng.randrange(sched.ncpus))
        apply(sched, step)
        res.steps.append(step)
        res.states_checked += 1
        for p in sched.check_invariants():
            res.problems.append(f"after step {len(res.steps)} ({step}): {p}")
    return res


def replay(make: Callable[[], Sched], steps: list[Step]) -> Sched:
    sched = make()
    for s in steps:
        apply(sched, s)
    return sched


def explore(make: Callable[[], Sched], depth: int) -> Iterator[tuple[list[Step], list[str]]]:
    """Depth-first over every step sequence up to ``depth`` (or until all tasks exit).

    Yields each maximal sequence with the invariant problems seen along it.
    Each sequence is replayed from a fresh system, so ``make`` must be
    deterministic.
    """

    def walk(prefix: list[Step]):
        sched = make()
        problems = []
        for i, s in enumerate(prefix):
            apply(sched, s)
            problems += [f"after step {i + 1} ({s}): {p}" for p in sched.check_invariants()]
        if len(prefix) == depth or finished(sched):
            yield prefix, problems
            return
        for s in choices(sched):
            yield from walk(prefix + [s])

    yield from walk([])


def run_exhaustive(make: Callable[[], Sched], depth: int) -> DriveResult:
    res = DriveResult()
    for steps, problems in explore(make, depth):
        res.states_checked += len(steps) + 1
        if problems and not res.problems:
            res.steps = steps
        res.problems += problems
    return res


def run_threads(sched: Sched, ticks_per_cpu: int, wake_every: Optional[int] = 3) -> DriveResult:
    """One thread per CPU, each ticking its own CPU. Invariants are checked at the end."""
    errors: list[BaseException] = []

    def body(cpu: int):
        try:
            for i in range(ticks_per_cpu):
                sched.tick(cpu)
                if wake_every and i % wake_every == 0:
                    for t in list(sched.tasks.values()):
                        if not t.runnable and not t.exited:
                            sched.wake(t.id)
        except BaseException as exc:  # surfaced to the caller
            errors.append(exc)

    threads = [threading.Thread(target=body, args=(c,)) for c in range(sched.ncpus)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return DriveResult(problems=sched.check_invariants(), states_checked=1)
