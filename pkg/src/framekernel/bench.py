"""Cost of the safety checks: each operation timed with checks on and off.

Timing runs in blocks of ``block`` calls, alternating checked and unchecked
blocks (and their order) so drift affects both sides equally. The garbage
collector is paused inside each block. The reported cost per call is the
median over blocks.
"""

from __future__ import annotations

import csv
import gc
import re
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, TextIO

from ._checks import CHECKS
from .frame import segment_from_unused
from .frame_alloc import AllocLayout, alloc_frames, register_frame_allocator
from .frame_alloc.buddy import BuddyAllocator
from .machine import Machine
from .mem import MemoryMap
from .privsep import KernelStack, RegisterFile, Space
from .sched import Run, Sched
from .sched.policies import RoundRobin
from .slab import TypeTag
from .slab.heap import global_heap_register

DEFAULT_ITERS = 100_000
DEFAULT_BLOCK = 100


@dataclass(frozen=True)
class BenchRow:
    op: str
    check: str
    checked_ns: float
    unchecked_ns: float
    iters: int

    @property
    def ratio(self) -> float:
        return (self.checked_ns - self.unchecked_ns) / self.checked_ns if self.checked_ns else 0.0


@dataclass
class Case:
    """``run(k)`` performs ``k`` operations; ``reset()`` runs untimed between blocks."""

    op: str
    check: str
    run: Callable[[int], None]
    reset: Callable[[], None] = lambda: None


def _timed(case: Case, k: int, checked: bool) -> float:
    # collector pauses are kept out of the timed region, as timeit does
    gc_was_on = gc.isenabled()
    gc.disable()
    CHECKS.enabled = checked
    try:
        t0 = time.perf_counter_ns()
        case.run(k)
        t1 = time.perf_counter_ns()
    finally:
        CHECKS.enabled = True
        if gc_was_on:
            gc.enable()
        case.reset()
    return (t1 - t0) / k


def measure(case: Case, iters: int = DEFAULT_ITERS, block: int = DEFAULT_BLOCK) -> BenchRow:
    blocks = max(1, -(-iters // block))
    on: list[float] = []
    off: list[float] = []
    _timed(case, block, True)  # warm-up
    _timed(case, block, False)
    for i in range(blocks):
        order = (True, False) if i % 2 == 0 else (False, True)
        for checked in order:
            (on if checked else off).append(_timed(case, block, checked))
    return BenchRow(case.op, case.check, statistics.median(on), statistics.median(off), blocks * block)


# -- cases -------------------------------------------------------------------

def _segment_rw() -> tuple[Case, Case]:
    mem = MemoryMap(4096, 16)
    seg = segment_from_unused(mem, 0, 1)
    payload = bytes(range(256)) * 16
    read, write = seg.read_bytes, seg.write_bytes

    def r(k):
        for _ in range(k):
            read(0, 4096)

    def w(k):
        for _ in range(k):
            write(0, payload)

    return (Case("segment_read_4k", "boundary check", r), Case("segment_write_4k", "boundary check", w))


def _iomem() -> tuple[Case, Case]:
    m = Machine(frame_count=16)
    m.plug(RegisterFile("regs", 0x100), Space.MEM, 0xFEB0_0000, 0xFEB0_0100)
    m.seal()
    h = m.io.acquire_mem(0xFEB0_0000, 0xFEB0_0100)
    rd, wr = h.read_once, h.write_once

    def r(k):
        for _ in range(k):
            rd(0x10, 4)

    def w(k):
        for _ in range(k):
            wr(0x10, 0x1234, 4)

    return (Case("iomem_read_once", "boundary check", r), Case("iomem_write_once", "boundary check", w))


def _stack_new() -> Case:
    mem = MemoryMap(4096, 1024)
    register_frame_allocator(mem, BuddyAllocator(4096))

    def run(k):
        for _ in range(k):
            KernelStack(mem, 4).drop()

    return Case("kernel_stack_new", "guard page creation", run)


def _yield() -> Case:
    sched = Sched(1)
    sched.register_scheduler(RoundRobin(1, time_slice=None))
    for _ in range(2):
        sched.spawn(iter(lambda: Run(1 << 30), None))
    sched.tick(0)
    y = sched.yield_now

    def run(k):
        for _ in range(k):
            y(0)

    def reset():
        sched.reports.clear()
        sched.cpus[0].history.clear()

    return Case("task_yield", "running flag check", run, reset)


def _alloc_frames() -> Case:
    mem = MemoryMap(4096, 4096)
    register_frame_allocator(mem, BuddyAllocator(4096))
    layout = AllocLayout(4096, 4096)
    held: list = []
    push = held.append

    def run(k):
        for _ in range(k):
            push(alloc_frames(mem, layout))

    def reset():
        for s in held:
            s.drop()
        held.clear()

    return Case("alloc_frames_1", "ownership check", run, reset)


def _heap_object() -> Case:
    # through the global heap, the path every heap allocation takes
    mem = MemoryMap(4096, 1024)
    register_frame_allocator(mem, BuddyAllocator(4096))
    heap = global_heap_register(mem)
    tag = TypeTag(48, 8)
    held: list = []
    push = held.append
    new = heap.alloc

    def run(k):
        for _ in range(k):
            push(new(tag))

    def reset():
        for o in held:
            o.free()
        held.clear()

    return Case("heap_object_48", "fit check", run, reset)


def cases() -> list[Case]:
    return [*_segment_rw(), *_iomem(), _stack_new(), _yield(), _alloc_frames(), _heap_object()]


def run_bench(pattern: Optional[str] = None, iters: int = DEFAULT_ITERS, block: int = DEFAULT_BLOCK) -> list[BenchRow]:
    rx = re.compile(pattern) if pattern else None
    return [measure(c, iters, block) for c in cases() if rx is None or rx.search(c.op)]


def write_csv(rows: Iterable[BenchRow], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["op", "checked_ns", "unchecked_ns", "ratio"])
    for r in rows:
        w.writerow([r.op, f"{r.checked_ns:.1f}", f"{r.unchecked_ns:.1f}", f"{r.ratio:.4f}"])


def format_table(rows: Iterable[BenchRow]) -> str:
    lines = [f"{'op':20} {'check':22} {'checked ns':>11} {'unchecked ns':>13} {'overhead':>9}"]
    for r in rows:
        lines.append(f"{r.op:20} {r.check:22} {r.checked_ns:11.1f} {r.unchecked_ns:13.1f} {r.ratio:9.1%}")
    return "\n".join(lines)
