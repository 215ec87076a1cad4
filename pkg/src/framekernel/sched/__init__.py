"""Scheduler injection and simulated CPUs.

A policy implements :class:`Scheduler` (``enqueue`` and ``local_rq_with``)
and hands out :class:`RunQueue` objects (``update_curr``, ``pick_next``,
``dequeue_curr``). The framework owns context switching and the private
``is_running`` flag of each task: a policy that proposes a task already
running elsewhere gets a ``guard_violation`` report instead of a switch.

Time is a logical tick counter. :meth:`Sched.tick` is the timer interrupt of
one CPU; the deterministic drivers in :mod:`framekernel.sched.drive` decide
which CPU ticks next.
"""

from __future__ import annotations

import enum
import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Protocol

from .._checks import CHECKS
from ..errors import AlreadyRegistered, GuardViolation, NotRegistered, TooLate

log = logging.getLogger(__name__)


class Event(enum.Enum):
    TICK = "tick"
    YIELD = "yield"
    SLEEP = "sleep"
    EXIT = "exit"


# -- task scripts ------------------------------------------------------------

@dataclass(frozen=True)
class Run:
    ticks: int


@dataclass(frozen=True)
class Sleep:
    pass


@dataclass(frozen=True)
class Yield:
    pass


@dataclass(frozen=True)
class Exit:
    pass


class Task:
    """A schedulable unit.

    ``sched_attrs`` is a free slot for the policy. ``is_running`` is
    read-only from outside the framework.
    """

    __slots__ = ("id", "name", "sched_attrs", "_running", "_runnable", "_exited", "_script", "_op", "_left", "ticks_run")

    def __init__(self, tid: int, script: Iterable, attrs: Optional[dict] = None, name: Optional[str] = None):
        self.id = tid
        self.name = name or f"task{tid}"
        self.sched_attrs: dict[str, Any] = dict(attrs or {})
        self._running = False
        self._runnable = True
        self._exited = False
        self._script = iter(script)
        self._op = None
        self._left = 0
        self.ticks_run = 0

    def __repr__(self):
        return f"Task({self.id}, {self.name})"

    @property
    def is_running(self) -> bool:
        return self._running

    @property
    def runnable(self) -> bool:
        return self._runnable

    @property
    def exited(self) -> bool:
        return self._exited

    def _next_op(self):
        if self._op is None:
            try:
                self._op = next(self._script)
            except StopIteration:
                self._op = Exit()
            if isinstance(self._op, Run):
                self._left = self._op.ticks
        return self._op


# -- policy protocol ---------------------------------------------------------

class RunQueue(Protocol):
    def update_curr(self, event: Event) -> bool:
        """Account for ``event``; return True if the current task should be preempted."""

    def pick_next(self) -> Optional[Task]: ...

    def dequeue_curr(self) -> None: ...


class Scheduler(Protocol):
    def enqueue(self, task: Task) -> None: ...

    def local_rq_with(self, cpu: int, fn: Callable[[RunQueue], Any]) -> Any: ...


# -- reports -----------------------------------------------------------------

@dataclass(frozen=True)
class SwitchReport:
    """Outcome of one scheduling decision.

    ``kind`` is one of ``switch``, ``continue``, ``idle``,
    ``guard_violation``, ``unknown_task`` or ``not_runnable``.
    """

    cpu: int
    tick: int
    kind: str
    prev: Optional[int] = None
    next: Optional[int] = None

    @property
    def refused(self) -> bool:
        return self.kind in ("guard_violation", "unknown_task", "not_runnable")


@dataclass
class Cpu:
    id: int
    current: Optional[Task] = None
    tick: int = 0
    idle_ticks: int = 0
    history: list = field(default_factory=list)


class Sched:
    """Simulated CPUs, the task table and the context-switch guard.

    Args:
        ncpus: Number of simulated CPUs.
        strict_guard: Raise :class:`GuardViolation` instead of reporting it.
    """

    def __init__(self, ncpus: int = 1, *, strict_guard: bool = False):
        if ncpus < 1:
            raise ValueError("need at least one CPU")
        self.cpus = [Cpu(i) for i in range(ncpus)]
        self.strict_guard = strict_guard
        self.policy: Optional[Scheduler] = None
        self.tasks: dict[int, Task] = {}
        self.reports: list[SwitchReport] = []
        self.log: list[str] = []
        self._ids = itertools.count(1)
        self._lock = threading.RLock()

    @property
    def ncpus(self) -> int:
        return len(self.cpus)

    def register_scheduler(self, policy: Scheduler) -> None:
        with self._lock:
            if self.policy is not None:
                raise AlreadyRegistered("scheduler already registered")
            if self.tasks:
                raise TooLate("tasks already exist")
            self.policy = policy

    def _policy(self) -> Scheduler:
        if self.policy is None:
            raise NotRegistered("no scheduler registered")
        return self.policy

    def _note(self, msg: str) -> None:
        self.log.append(msg)
        log.debug(msg)

    # -- task lifecycle ------------------------------------------------------

    def spawn(self, script: Iterable = (), attrs: Optional[dict] = None, name: Optional[str] = None) -> int:
        """Create a task and hand it to the policy."""
        policy = self._policy()
        with self._lock:
            task = Task(next(self._ids), script, attrs, name)
            self.tasks[task.id] = task
        self._note(f"spawn {task.id} {task.name}")
        policy.enqueue(task)
        return task.id

    def wake(self, tid: int) -> bool:
        task = self.tasks[tid]
        with self._lock:
            if task._exited or task._runnable:
                self._note(f"wake {tid} ignored ({'exited' if task._exited else 'runnable'})")
                return False
            task._runnable = True
        self._note(f"wake {tid}")
        self._policy().enqueue(task)
        return True

    def sleep(self, cpu: int) -> Optional[SwitchReport]:
        """The current task of ``cpu`` blocks."""
        return self._leave(cpu, Event.SLEEP)

    def exit_current(self, cpu: int) -> Optional[SwitchReport]:
        return self._leave(cpu, Event.EXIT)

    def _leave(self, cpu: int, event: Event) -> Optional[SwitchReport]:
        c = self.cpus[cpu]
        task = c.current
        if task is None:
            return None
        with self._lock:
            task._runnable = False
            if event is Event.EXIT:
                task._exited = True
        self._policy().local_rq_with(cpu, lambda rq: rq.dequeue_curr())
        self._note(f"cpu{cpu} {event.value} {task.id}")
        return self.cpu_schedule(cpu, event)

    def yield_now(self, cpu: int) -> Optional[SwitchReport]:
        return self.cpu_schedule(cpu, Event.YIELD)

    # -- scheduling ----------------------------------------------------------

    def tick(self, cpu: int) -> Optional[SwitchReport]:
        """One timer tick on ``cpu``: run the current task's script one step."""
        c = self.cpus[cpu]
        c.tick += 1
        task = c.current
        if task is None:
            c.idle_ticks += 1
            return self.cpu_schedule(cpu, Event.TICK)
        op = task._next_op()
        if isinstance(op, Run):
            task.ticks_run += 1
            task._left -= 1
            if task._left <= 0:
                task._op = None
            return self.cpu_schedule(cpu, Event.TICK)
        task._op = None
        if isinstance(op, Yield):
            return self.yield_now(cpu)
        if isinstance(op, Sleep):
            return self.sleep(cpu)
        return self.exit_current(cpu)

    def cpu_schedule(self, cpu: int, event: Event = Event.YIELD) -> Optional[SwitchReport]:
        """Ask the policy for the next task of ``cpu`` and switch to it.

        On a timer tick the policy may decline to reschedule; that returns
        None and leaves the CPU as is.
        """
        c = self.cpus[cpu]
        prev = c.current

        def body(rq):
            preempt = rq.update_curr(event)
            if event is Event.TICK and prev is not None and not preempt:
                return _KEEP
            return rq.pick_next()

        nxt = self._policy().local_rq_with(cpu, body)
        if nxt is _KEEP:
            return None
        return self._switch(c, prev, nxt)

    def _switch(self, c: Cpu, prev: Optional[Task], nxt) -> SwitchReport:
        with self._lock:
            if nxt is None:
                kind = "idle"
            elif nxt is prev and prev._runnable:
                kind = "continue"
            elif not isinstance(nxt, Task) or self.tasks.get(nxt.id) is not nxt:
                kind = "unknown_task"
            elif CHECKS.enabled and nxt._running and nxt is not prev:
                kind = "guard_violation"
            elif CHECKS.enabled and not nxt._runnable:
                kind = "not_runnable"
            else:
                kind = "switch"

            if kind == "switch":
                nxt._running = True
                c.current = nxt
                if prev is not None:
                    prev._running = False
            elif kind != "continue":
                # refused or nothing to run: the CPU goes idle
                if prev is not None:
                    prev._running = False
                c.current = None
            report = SwitchReport(
                c.id, c.tick, kind,
                prev.id if prev is not None else None,
                getattr(nxt, "id", None),
            )
        self.reports.append(report)
        if kind != "continue":
            c.history.append(report.next if kind == "switch" else None)
        if report.refused:
            self._note(f"cpu{c.id} t={c.tick} refused {kind} task {report.next}")
            if kind == "guard_violation" and self.strict_guard:
                raise GuardViolation(f"task {report.next} is already running on another CPU")
        return report

    # -- inspection ----------------------------------------------------------

    def current(self, cpu: int) -> Optional[int]:
        t = self.cpus[cpu].current
        return t.id if t is not None else None

    def guard_violations(self) -> list[SwitchReport]:
        return [r for r in self.reports if r.kind == "guard_violation"]

    def check_invariants(self) -> list[str]:
        """Single-run and flag/state agreement; returns a list of problems."""
        problems = []
        seen: dict[int, int] = {}
        for c in self.cpus:
            t = c.current
            if t is None:
                continue
            if t.id in seen:
                problems.append(f"task {t.id} current on cpu{seen[t.id]} and cpu{c.id}")
            seen[t.id] = c.id
        for t in self.tasks.values():
            if t._running != (t.id in seen):
                problems.append(f"task {t.id}: is_running={t._running} but current on {seen.get(t.id)}")
        return problems


_KEEP = object()

from .policies import DoubleBookingPolicy, ForgingPolicy, RoundRobin, Vruntime  # noqa: E402

__all__ = [
    "Cpu", "DoubleBookingPolicy", "Event", "Exit", "ForgingPolicy", "RoundRobin", "Run", "RunQueue",
    "Sched", "Scheduler", "Sleep", "SwitchReport", "Task", "Vruntime", "Yield",
]
