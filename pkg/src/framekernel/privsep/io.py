"""Port and memory-mapped I/O with a sensitivity registry.

Ranges are sensitive unless the platform labels them otherwise; a
de-privileged driver can only acquire insensitive ranges.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Protocol

from .._checks import CHECKS
from ..errors import OutOfBounds, Overlap, RegistrySealed, SensitiveRange, Unaligned

WIDTHS = (1, 2, 4, 8)


class Space(enum.Enum):
    MEM = "mem"
    PORT = "port"


class Sensitivity(enum.Enum):
    SENSITIVE = "sensitive"
    INSENSITIVE = "insensitive"


def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


class SensitivityRegistry:
    def __init__(self):
        self._labels: list[tuple[Space, int, int, Sensitivity]] = []
        self.sealed = False

    def label(self, space: Space, lo: int, hi: int, sensitivity: Sensitivity) -> None:
        if self.sealed:
            raise RegistrySealed("sensitivity labels are fixed after boot")
        if not lo < hi:
            raise ValueError(f"empty range [{lo:#x}, {hi:#x})")
        self._labels.append((Space(space), lo, hi, Sensitivity(sensitivity)))

    def seal(self) -> None:
        self.sealed = True

    def is_insensitive(self, space: Space, lo: int, hi: int) -> bool:
        """True only if every byte is covered by insensitive labels and none by sensitive ones."""
        space = Space(space)
        covered = []
        for s, a, b, sens in self._labels:
            if s is not space or not _overlaps((a, b), (lo, hi)):
                continue
            if sens is Sensitivity.SENSITIVE:
                return False
            covered.append((max(a, lo), min(b, hi)))
        pos = lo
        for a, b in sorted(covered):
            if a > pos:
                return False
            pos = max(pos, b)
        return pos >= hi


class Device(Protocol):
    name: str

    def io_read(self, offset: int, width: int) -> int: ...

    def io_write(self, offset: int, width: int, value: int) -> None: ...


class RegisterFile:
    """Plain little-endian registers with no side effects."""

    def __init__(self, name: str, size: int):
        self.name = name
        self.regs = bytearray(size)

    def connect(self, board) -> None:
        pass

    def step(self) -> None:
        pass

    def io_read(self, offset: int, width: int) -> int:
        return int.from_bytes(self.regs[offset:offset + width], "little")

    def io_write(self, offset: int, width: int, value: int) -> None:
        self.regs[offset:offset + width] = value.to_bytes(width, "little")


@dataclass
class _Attachment:
    space: Space
    lo: int
    hi: int
    device: Device


class IoBus:
    """Routes I/O accesses to device models."""

    def __init__(self):
        self._devs: list[_Attachment] = []

    def attach(self, space: Space, lo: int, hi: int, device: Device) -> None:
        space = Space(space)
        for d in self._devs:
            if d.space is space and _overlaps((d.lo, d.hi), (lo, hi)):
                raise Overlap(f"{device.name} overlaps {d.device.name}")
        self._devs.append(_Attachment(space, lo, hi, device))

    def _find(self, space: Space, addr: int, width: int) -> _Attachment:
        for d in self._devs:
            if d.space is space and d.lo <= addr and addr + width <= d.hi:
                return d
        raise OutOfBounds(f"no device decodes {space.value} {addr:#x}")

    def read(self, space: Space, addr: int, width: int) -> int:
        d = self._find(space, addr, width)
        return d.device.io_read(addr - d.lo, width)

    def write(self, space: Space, addr: int, width: int, value: int) -> None:
        d = self._find(space, addr, width)
        d.device.io_write(addr - d.lo, width, value & ((1 << (8 * width)) - 1))


class IoRange:
    """An acquired I/O range; every access is a single volatile bus access."""

    space = Space.MEM

    def __init__(self, manager: "IoManager", lo: int, hi: int):
        self._manager = manager
        self.lo = lo
        self.hi = hi
        self.live = True

    def __repr__(self):
        return f"{type(self).__name__}([{self.lo:#x}, {self.hi:#x}))"

    @property
    def size(self) -> int:
        return self.hi - self.lo

    def _check(self, offset: int, width: int) -> None:
        if width not in WIDTHS:
            raise Unaligned(f"width {width} not one of {WIDTHS}")
        if CHECKS.enabled and (not self.live or offset < 0 or offset + width > self.hi - self.lo):
            raise OutOfBounds(f"offset {offset}+{width} outside {self!r}")

    def read_once(self, offset: int, width: int = 4) -> int:
        self._check(offset, width)
        return self._manager.bus.read(self.space, self.lo + offset, width)

    def write_once(self, offset: int, value: int, width: int = 4) -> None:
        self._check(offset, width)
        self._manager.bus.write(self.space, self.lo + offset, width, value)

    def release(self) -> None:
        self._manager._release(self)


class IoMem(IoRange):
    space = Space.MEM


class IoPort(IoRange):
    space = Space.PORT


class IoManager:
    def __init__(self, registry: SensitivityRegistry, bus: IoBus):
        self.registry = registry
        self.bus = bus
        self._held: list[IoRange] = []
        self._lock = threading.Lock()

    def _acquire(self, cls, lo: int, hi: int):
        if not lo < hi:
            raise ValueError(f"empty range [{lo:#x}, {hi:#x})")
        if not self.registry.is_insensitive(cls.space, lo, hi):
            raise SensitiveRange(f"{cls.space.value} [{lo:#x}, {hi:#x}) is sensitive")
        with self._lock:
            for h in self._held:
                if h.space is cls.space and _overlaps((h.lo, h.hi), (lo, hi)):
                    raise Overlap(f"[{lo:#x}, {hi:#x}) overlaps held {h!r}")
            r = cls(self, lo, hi)
            self._held.append(r)
            return r

    def acquire_mem(self, lo: int, hi: int) -> IoMem:
        return self._acquire(IoMem, lo, hi)

    def acquire_port(self, lo: int, hi: int) -> IoPort:
        return self._acquire(IoPort, lo, hi)

    def _release(self, r: IoRange) -> None:
        with self._lock:
            self._held = [h for h in self._held if h is not r]
            r.live = False
