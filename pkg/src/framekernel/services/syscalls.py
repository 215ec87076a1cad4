"""A tiny system-call service: user programs run as scheduled tasks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from ..api import (
    AllocLayout, ExitTrap, FrameworkError, Machine, PageFaultTrap, Run, SyscallTrap, UserContext,
    VmSpace, Yield, alloc_frames, usermode_run,
)

SYS_WRITE = 0
SYS_YIELD = 1
SYS_EXIT = 2
SYSCALL_NAMES = {SYS_WRITE: "write", SYS_YIELD: "yield", SYS_EXIT: "exit"}

USER_BASE = 0x40_0000
EFAULT = 14


@dataclass
class UserTask:
    name: str
    ctx: UserContext
    space: VmSpace
    program: Sequence
    tid: Optional[int] = None
    traps: list[str] = field(default_factory=list)
    done: bool = False


class SyscallService:
    """Runs user programs and services their ``write``/``yield``/``exit`` calls.

    ``write(rdi=buf, rsi=len)`` appends the user bytes to :attr:`console`.
    """

    def __init__(self, machine: Machine):
        self.machine = machine
        self.console = bytearray()
        self.tasks: dict[str, UserTask] = {}
        self.log: list[tuple[str, str]] = []

    def load(self, name: str, program: Sequence, pages: int = 1, perms: str = "rw",
             attrs: Optional[dict] = None) -> UserTask:
        """Create an address space with ``pages`` pages at :data:`USER_BASE` and spawn the task."""
        if name in self.tasks:
            raise ValueError(f"task {name!r} already loaded")
        mem = self.machine.mem
        space = VmSpace(mem)
        if pages:
            with alloc_frames(mem, AllocLayout.frames(pages, mem.frame_size)) as seg:
                space.map(USER_BASE, seg, perms)
        task = UserTask(name, UserContext(rsp=USER_BASE + pages * mem.frame_size), space, list(program))
        self.tasks[name] = task
        task.tid = self.machine.sched.spawn(self._body(task), attrs, name)
        return task

    def _trap(self, task: UserTask, what: str) -> None:
        task.traps.append(what)
        self.log.append((task.name, what))

    def _body(self, task: UserTask) -> Iterator:
        ctx = task.ctx
        try:
            while True:
                trap = usermode_run(ctx, task.space, task.program)
                if isinstance(trap, PageFaultTrap):
                    self._trap(task, f"page_fault {trap.vaddr:#x}")
                    return
                if isinstance(trap, ExitTrap):
                    self._trap(task, f"exit {trap.code}")
                    return
                assert isinstance(trap, SyscallTrap)
                self._trap(task, f"syscall {trap.no}")
                if trap.no == SYS_WRITE:
                    try:
                        data = task.space.read_user(ctx["rdi"], ctx["rsi"])
                    except FrameworkError:
                        ctx["rax"] = -EFAULT
                    else:
                        self.console += data
                        ctx["rax"] = len(data)
                    yield Run(1)
                elif trap.no == SYS_YIELD:
                    yield Yield()
                elif trap.no == SYS_EXIT:
                    return
                else:
                    self._trap(task, f"unknown_syscall {trap.no}")
                    return
        finally:
            task.done = True
            task.space.clear()

    def run(self, max_ticks: int = 10_000) -> int:
        """Tick every CPU until all loaded tasks are done; returns the ticks used."""
        sched = self.machine.sched
        for n in range(max_ticks):
            if all(t.done for t in self.tasks.values()):
                return n
            for cpu in range(sched.ncpus):
                sched.tick(cpu)
        return max_ticks

    def trap_log(self, name: Optional[str] = None) -> list[str]:
        return [w for n, w in self.log if name is None or n == name]


def demo_syscall_loop(machine: Machine, programs: dict[str, Sequence], max_ticks: int = 10_000) -> SyscallService:
    svc = SyscallService(machine)
    for name, prog in programs.items():
        svc.load(name, prog)
    svc.run(max_ticks)
    return svc
