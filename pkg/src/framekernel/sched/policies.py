"""Reference scheduling policies.

These only use the public policy surface: they see tasks, may read
``is_running``, and keep their own bookkeeping in ``sched_attrs``.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from collections import deque
from typing import Optional

from . import Event, Task

NICE_0_WEIGHT = 1024


class _Queues:
    """Per-CPU queues with a lock each and least-loaded placement."""

    rq_class = None

    def __init__(self, ncpus: int = 1, **rq_kwargs):
        self.rqs = [self.rq_class(i, **rq_kwargs) for i in range(ncpus)]
        self.locks = [threading.Lock() for _ in range(ncpus)]

    def _target(self, task: Task) -> int:
        cpu = task.sched_attrs.get("cpu")
        if cpu is not None:
            return cpu
        return min(range(len(self.rqs)), key=lambda i: (self.rqs[i].load(), i))

    def enqueue(self, task: Task) -> None:
        cpu = self._target(task)
        with self.locks[cpu]:
            self.rqs[cpu].push(task)

    def local_rq_with(self, cpu: int, fn):
        with self.locks[cpu]:
            return fn(self.rqs[cpu])


class FifoQueue:
    def __init__(self, cpu: int, time_slice: Optional[int] = 5):
        self.cpu = cpu
        self.queue: deque[Task] = deque()
        self.current: Optional[Task] = None
        self.time_slice = time_slice
        self.used = 0

    def load(self) -> int:
        return len(self.queue) + (self.current is not None)

    def push(self, task: Task) -> None:
        self.queue.append(task)

    def update_curr(self, event: Event) -> bool:
        if event is Event.TICK and self.current is not None:
            self.used += 1
            return self.time_slice is not None and self.used >= self.time_slice and bool(self.queue)
        return False

    def pick_next(self) -> Optional[Task]:
        if self.current is not None:
            self.queue.append(self.current)
        self.current = self.queue.popleft() if self.queue else None
        self.used = 0
        return self.current

    def dequeue_curr(self) -> None:
        self.current = None


class RoundRobin(_Queues):
    """FIFO per CPU with an optional time slice (in ticks)."""

    rq_class = FifoQueue


class VruntimeQueue:
    """Minimum weighted runtime first. Ties go to the earlier arrival."""

    def __init__(self, cpu: int, granularity: float = 0.0):
        self.cpu = cpu
        self.heap: list = []
        self.current: Optional[Task] = None
        self.min_vruntime = 0.0
        self.granularity = granularity
        self._seq = itertools.count()

    def load(self) -> int:
        return len(self.heap) + (self.current is not None)

    def push(self, task: Task) -> None:
        attrs = task.sched_attrs
        attrs["vruntime"] = max(attrs.get("vruntime", 0.0), self.min_vruntime)
        heapq.heappush(self.heap, (attrs["vruntime"], next(self._seq), task))

    def update_curr(self, event: Event) -> bool:
        cur = self.current
        if cur is None:
            return False
        if event is Event.TICK:
            cur.sched_attrs["vruntime"] += NICE_0_WEIGHT / cur.sched_attrs.get("weight", NICE_0_WEIGHT)
        if self.heap:
            self.min_vruntime = max(self.min_vruntime, min(cur.sched_attrs["vruntime"], self.heap[0][0]))
            return cur.sched_attrs["vruntime"] > self.heap[0][0] + self.granularity
        self.min_vruntime = max(self.min_vruntime, cur.sched_attrs["vruntime"])
        return False

    def pick_next(self) -> Optional[Task]:
        if self.current is not None:
            self.push(self.current)
        self.current = heapq.heappop(self.heap)[2] if self.heap else None
        return self.current

    def dequeue_curr(self) -> None:
        self.current = None


class Vruntime(_Queues):
    """Weighted fair policy: pick the task with the least runtime per unit weight.

    Weights come from ``sched_attrs["weight"]`` (default 1024, the nice-0
    weight); runtime accrues one tick at a time.
    """

    rq_class = VruntimeQueue


class DoubleBookingPolicy(RoundRobin):
    """Adversarial: hands out a task that is already running elsewhere when it can."""

    def __init__(self, ncpus: int = 1, **kw):
        super().__init__(ncpus, **kw)
        self.all_tasks: list[Task] = []

    def enqueue(self, task: Task) -> None:
        self.all_tasks.append(task)
        super().enqueue(task)

    def local_rq_with(self, cpu: int, fn):
        policy = self

        class Bad:
            def update_curr(self, event):
                return policy.rqs[cpu].update_curr(event) or True

            def pick_next(self):
                mine = policy.rqs[cpu].current
                for t in policy.all_tasks:
                    if t.is_running and t is not mine:
                        return t
                return policy.rqs[cpu].pick_next()

            def dequeue_curr(self):
                policy.rqs[cpu].dequeue_curr()

        with self.locks[cpu]:
            return fn(Bad())


class ForgingPolicy(RoundRobin):
    """Adversarial: returns a task object the framework never created."""

    def local_rq_with(self, cpu: int, fn):
        class Forged:
            def update_curr(self, event):
                return True

            def pick_next(self):
                return Task(10_000 + cpu, [])

            def dequeue_curr(self):
                pass

        return fn(Forged())
