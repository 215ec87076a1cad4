"""User-mode CPU context and a scripted user-mode runner.

User programs are lists of ops rather than machine code. The instruction
pointer register ``rip`` indexes into that list, so a context can be resumed
after any trap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

MASK64 = (1 << 64) - 1
RFLAGS_IF = 1 << 9
RFLAGS_IOPL = 3 << 12
# bits a user context may never change
SENSITIVE_MASK = RFLAGS_IF | RFLAGS_IOPL
INITIAL_RFLAGS = 0x202

GPRS = (
    "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp",
    "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15", "rip",
)


class UserContext:
    """General registers plus the user-visible part of RFLAGS."""

    def __init__(self, **regs):
        self._regs = dict.fromkeys(GPRS, 0)
        self._rflags = INITIAL_RFLAGS
        for name, value in regs.items():
            self[name] = value

    def __getitem__(self, name: str) -> int:
        return self._regs[name]

    def __setitem__(self, name: str, value: int) -> None:
        if name not in self._regs:
            raise KeyError(name)
        self._regs[name] = value & MASK64

    def get_flags(self) -> int:
        return self._rflags & ~SENSITIVE_MASK & MASK64

    def set_flags(self, value: int) -> None:
        self._rflags = (self._rflags & SENSITIVE_MASK) | (value & ~SENSITIVE_MASK & MASK64)

    def __repr__(self):
        nz = {k: hex(v) for k, v in self._regs.items() if v}
        return f"UserContext({nz}, rflags={self.get_flags():#x})"


# -- user program ops --------------------------------------------------------

@dataclass(frozen=True)
class SetReg:
    reg: str
    value: int


@dataclass(frozen=True)
class Load:
    vaddr: int
    size: int
    reg: str


@dataclass(frozen=True)
class Store:
    vaddr: int
    data: bytes


@dataclass(frozen=True)
class Syscall:
    no: int


@dataclass(frozen=True)
class UserExit:
    code: int = 0


UserOp = Union[SetReg, Load, Store, Syscall, UserExit]


# -- traps -------------------------------------------------------------------

@dataclass(frozen=True)
class SyscallTrap:
    no: int


@dataclass(frozen=True)
class PageFaultTrap:
    vaddr: int
    write: bool


@dataclass(frozen=True)
class ExitTrap:
    code: int = 0


Trap = Union[SyscallTrap, PageFaultTrap, ExitTrap]


def usermode_run(ctx: UserContext, space, program: Sequence[UserOp], budget: int = 100_000) -> Trap:
    """Execute ``program`` from ``ctx['rip']`` until the first trap.

    Loads and stores go through ``space`` with user permissions; a missing
    mapping or permission becomes a page-fault trap with ``rip`` left on the
    faulting op. Running off the end is an exit with code 0.
    """
    pc = ctx["rip"]
    for _ in range(budget):
        if pc >= len(program):
            ctx["rip"] = pc
            return ExitTrap(0)
        op = program[pc]
        if isinstance(op, Syscall):
            ctx["rax"] = op.no
            ctx["rip"] = pc + 1
            return SyscallTrap(op.no)
        if isinstance(op, UserExit):
            ctx["rip"] = pc + 1
            return ExitTrap(op.code)
        if isinstance(op, SetReg):
            ctx[op.reg] = op.value
        elif isinstance(op, Load):
            bad = space.fault_addr(op.vaddr, op.size, write=False)
            if bad is not None:
                ctx["rip"] = pc
                return PageFaultTrap(bad, False)
            ctx[op.reg] = int.from_bytes(space.read_user(op.vaddr, op.size), "little")
        elif isinstance(op, Store):
            bad = space.fault_addr(op.vaddr, len(op.data), write=True)
            if bad is not None:
                ctx["rip"] = pc
                return PageFaultTrap(bad, True)
            space.write_user(op.vaddr, op.data)
        else:
            raise TypeError(f"not a user op: {op!r}")
        pc += 1
    ctx["rip"] = pc
    raise RuntimeError("user program exceeded its step budget without trapping")
