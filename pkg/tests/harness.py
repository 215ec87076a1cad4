"""Workloads shared by the unit tests and the acceptance suite."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from framekernel.errors import (
    GuardFault, SensitiveRange, TypedFrameRejected, TypedMemoryRejected,
)
from framekernel.frame import frame_from_unused, segment_from_unused
from framekernel.frame_alloc import BuddyAllocator, register_frame_allocator
from framekernel.machine import Machine
from framekernel.mem import MemoryMap
from framekernel.privsep import (
    Direction, DmaStatus, KernelStack, RegisterFile, Space, VmSpace,
)
from framekernel.sched import RoundRobin, Run, Sched, Sleep, Yield

from oracles import ShadowRefs, store_diff


def claim_dup_drop(n_ops: int, seed: int, frames: int = 64) -> list[str]:
    """Random from_unused/dup/drop against the shadow; returns mismatches."""
    rng = random.Random(seed)
    mem = MemoryMap(256, frames)
    shadow = ShadowRefs(frames)
    live = []
    bad = []
    for i in range(n_ops):
        r = rng.random()
        if live and r < 0.3:
            h = live.pop(rng.randrange(len(live)))
            h.drop()
            shadow.drop(h.first_frame, h.nframes)
        elif live and r < 0.5:
            h = rng.choice(live)
            live.append(h.dup())
            shadow.dup(h.first_frame, h.nframes)
        else:
            first, n = rng.randrange(frames + 2), rng.choice([1, 1, 2, 3])
            want = shadow.claim(first, n)
            try:
                live.append(segment_from_unused(mem, first * 256, n))
                got = "ok"
            except Exception as exc:  # compared by name against the shadow's answer
                got = type(exc).__name__
            if got != want:
                bad.append(f"op {i}: claim {first}+{n}: got {got}, shadow {want}")
        if i % 64 == 0 or i == n_ops - 1:
            if mem.ref_counts() != shadow.refs:
                bad.append(f"op {i}: ref counts diverge")
            if mem.unused_frames() != shadow.unused:
                bad.append(f"op {i}: unused sets diverge")
    return bad


def sched_system(ncpus: int, ntasks: int, seed: int = 0) -> Sched:
    rng = random.Random(seed)
    s = Sched(ncpus)
    s.register_scheduler(RoundRobin(ncpus, time_slice=2))
    for _ in range(ntasks):
        script = []
        for _ in range(rng.randint(2, 5)):
            script.append(rng.choice([Run(rng.randint(1, 3)), Yield(), Sleep()]))
        s.spawn(script)
    return s


@dataclass
class NegativeReport:
    rejected: dict[str, bool] = field(default_factory=dict)
    stray_bytes: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.rejected.values()) and not self.stray_bytes


def _rejects(fn, exc) -> bool:
    try:
        fn()
    except exc:
        return True
    return False


def negative_suite() -> NegativeReport:
    """Every privileged resource refuses misuse; no byte changes where it shouldn't."""
    rep = NegativeReport()
    m = Machine(frame_count=64)
    m.plug(RegisterFile("nic", 0x100), Space.MEM, 0xFEB0_0000, 0xFEB0_0100, vectors=[40])
    m.seal()
    mem = m.mem
    register_frame_allocator(mem, BuddyAllocator(mem.frame_size))
    before = bytes(mem.store)

    vm = VmSpace(mem)
    for kind in ("page_table", "kernel_stack", "slab", "metadata"):
        h = frame_from_unused(mem, 0, kind)
        rep.rejected[f"map {kind} frame"] = _rejects(lambda: vm.map(0x400000, h), TypedFrameRejected)
        rep.rejected[f"dma {kind} frame"] = _rejects(lambda: m.iommu.map(h), TypedMemoryRejected)
        h.drop()
    rep.rejected["no mapping from typed attempts"] = len(vm) == 0 and not m.iommu.live_mappings()

    rep.rejected["acquire sensitive mem"] = _rejects(lambda: m.io.acquire_mem(0xFEE0_0000, 0xFEE0_1000), SensitiveRange)
    rep.rejected["acquire sensitive port"] = _rejects(lambda: m.io.acquire_port(0xCF8, 0xD00), SensitiveRange)
    rep.rejected["acquire unlabeled mem"] = _rejects(lambda: m.io.acquire_mem(0x1000, 0x2000), SensitiveRange)
    rep.rejected["acquire straddling range"] = _rejects(
        lambda: m.io.acquire_mem(0xFEB0_F000, 0xFEB1_1000), SensitiveRange)

    hits = []
    m.irq.register(40, hits.append)
    m.irq.register(41, hits.append)
    rep.rejected["unauthorized device"] = not m.device_raise("intruder", 40)
    rep.rejected["unauthorized vector"] = not m.device_raise("nic", 41)
    rep.rejected["authorized raise delivered"] = m.device_raise("nic", 40) and hits == [40]

    ks = KernelStack(mem, 2)
    guard_lo, guard_hi = ks.guard
    rep.rejected["guard write"] = all(
        _rejects(lambda o=o: ks.write(o, 0xFF), GuardFault) for o in range(-mem.frame_size, 0, 97))
    rep.rejected["guard read"] = _rejects(lambda: ks.read(-1), GuardFault)
    ks.write(0, 0x11)
    stack_byte = ks.base

    buf = segment_from_unused(mem, 8 * mem.frame_size, 2)
    win = m.iommu.map(buf, direction=Direction.FROM_DEVICE)
    stale = segment_from_unused(mem, 12 * mem.frame_size, 1)
    old = m.iommu.map(stale)
    m.iommu.unmap(old)
    rep.rejected["write after unmap"] = m.device_dma_write("nic", old.iova, b"x") is DmaStatus.BLOCKED
    rep.rejected["write past window"] = m.device_dma_write("nic", win.iova + win.span, b"x") is DmaStatus.BLOCKED
    rep.rejected["write straddling window end"] = (
        m.device_dma_write("nic", win.iova + win.span - 1, b"xy") is DmaStatus.BLOCKED)
    allowed = set(range(buf.addr, buf.addr + buf.span)) | {stack_byte}

    rng = random.Random(99)
    lo, hi = win.iova - 2 * mem.frame_size, win.iova + win.span + 2 * mem.frame_size
    landed = 0
    for _ in range(10_000):
        data = rng.randbytes(rng.randint(1, 64))
        landed += m.device_dma_write("fuzz", rng.randrange(lo, hi), data) is DmaStatus.OK
    rep.rejected["some fuzz writes landed"] = landed > 0
    rep.stray_bytes = [i for i in store_diff(before, bytes(mem.store)) if i not in allowed]
    rep.rejected["guard bytes untouched"] = all(
        before[i] == mem.store[i] for i in range(guard_lo, guard_hi))
    return rep
