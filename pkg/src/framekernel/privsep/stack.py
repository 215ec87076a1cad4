"""Kernel stacks with an inaccessible guard frame below the usable range."""

from __future__ import annotations

from typing import Optional

from .._checks import CHECKS
from ..errors import GuardFault, OutOfBounds
from ..frame_alloc import AllocLayout, alloc_frames
from ..mem import MemoryMap


class KernelStack:
    """``frames`` usable frames above one reserved guard frame.

    Offsets are relative to the lowest usable byte; the stack grows down
    from :attr:`top`, so an overflow walks into the guard frame first. The
    guard frame is always reserved; with checks on it is also registered in
    ``mem.guard_regions`` and every access to it faults.
    """

    def __init__(self, mem: MemoryMap, frames: int = 1):
        if frames < 1:
            raise ValueError("a kernel stack needs at least one frame")
        fs = mem.frame_size
        self._seg = alloc_frames(mem, AllocLayout((frames + 1) * fs, fs), "kernel_stack")
        self._mem = mem
        self.base = self._seg.addr + fs
        self.size = frames * fs
        self.guard: Optional[tuple[int, int]] = None
        if CHECKS.enabled:
            self.guard = (self._seg.addr, self.base)
            mem.guard_regions[self._seg.addr] = self.base

    def __repr__(self):
        return f"KernelStack(base={self.base:#x}, size={self.size}, guard={self.guard is not None})"

    @property
    def has_guard(self) -> bool:
        return self.guard is not None

    @property
    def top(self) -> int:
        return self.base + self.size

    def _resolve(self, offset: int) -> int:
        if 0 <= offset < self.size:
            return self.base + offset
        if -self._mem.frame_size <= offset < 0:
            if self.guard is not None:
                raise GuardFault(f"stack access at {self.base + offset:#x} hit the guard frame")
            return self.base + offset
        raise OutOfBounds(f"stack offset {offset} outside [0, {self.size})")

    def read(self, offset: int) -> int:
        return self._mem.phys_read(self._resolve(offset), 1)[0]

    def write(self, offset: int, value: int) -> None:
        self._mem.phys_write(self._resolve(offset), bytes([value & 0xFF]))

    def drop(self) -> None:
        if self.guard is not None:
            self._mem.guard_regions.pop(self.guard[0], None)
        self._seg.drop()
