"""Which services to load and how they are configured."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..api import (
    DEFAULT_CLASSES, BuddyAllocator, GlobalHeap, Machine, RoundRobin, Vruntime, global_heap_register,
    register_frame_allocator,
)
from .echo import EchoDriver
from .syscalls import SYSCALL_NAMES, SyscallService

SCHEDULERS = {"round_robin": RoundRobin, "vruntime": Vruntime}


@dataclass(frozen=True)
class DriverSpec:
    name: str
    mmio: int
    vector: Optional[int] = None
    map_dma: bool = True


@dataclass
class ServiceManifest:
    scheduler: str = "round_robin"
    time_slice: int = 5
    frame_allocator: str = "buddy"
    heap_classes: tuple[int, ...] = DEFAULT_CLASSES
    drivers: tuple[DriverSpec, ...] = ()
    syscalls: dict[int, str] = field(default_factory=lambda: dict(SYSCALL_NAMES))


@dataclass
class Services:
    machine: Machine
    allocator: BuddyAllocator
    scheduler: object
    heap: Optional[GlobalHeap]
    syscalls: SyscallService
    drivers: dict[str, EchoDriver]


def boot_services(machine: Machine, manifest: Optional[ServiceManifest] = None) -> Services:
    m = manifest or ServiceManifest()
    if m.frame_allocator != "buddy":
        raise ValueError(f"unknown frame allocator {m.frame_allocator!r}")
    allocator = BuddyAllocator(machine.mem.frame_size)
    register_frame_allocator(machine.mem, allocator)

    try:
        policy_cls = SCHEDULERS[m.scheduler]
    except KeyError:
        raise ValueError(f"unknown scheduler {m.scheduler!r}") from None
    kwargs = {"time_slice": m.time_slice} if policy_cls is RoundRobin else {}
    policy = policy_cls(machine.sched.ncpus, **kwargs)
    machine.sched.register_scheduler(policy)

    heap = global_heap_register(machine.mem, m.heap_classes) if m.heap_classes else None
    drivers = {d.name: EchoDriver(machine, d.mmio, map_dma=d.map_dma, vector=d.vector) for d in m.drivers}
    return Services(machine, allocator, policy, heap, SyscallService(machine), drivers)
