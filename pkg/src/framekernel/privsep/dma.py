"""IOMMU-mediated DMA.

Each mapping opens a fresh device-visible window (an IOVA range that is
never reused). Device accesses outside every live window, or against the
mapping's direction, are blocked and logged.
"""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

from ..errors import NotMapped, TypedMemoryRejected
from ..frame import Segment
from ..mem import MemoryMap

log = logging.getLogger(__name__)

IOVA_BASE = 0x1_0000_0000


class DmaMode(enum.Enum):
    COHERENT = "coherent"
    STREAM = "stream"


class Direction(enum.Enum):
    TO_DEVICE = "to_device"
    FROM_DEVICE = "from_device"
    BIDIRECTIONAL = "bidirectional"

    @property
    def device_writes(self) -> bool:
        return self is not Direction.TO_DEVICE

    @property
    def device_reads(self) -> bool:
        return self is not Direction.FROM_DEVICE


class DmaStatus(enum.Enum):
    OK = "ok"
    BLOCKED = "blocked"


@dataclass
class DmaMapping:
    iommu: "Iommu"
    iova: int
    segment: Segment
    mode: DmaMode
    direction: Direction
    live: bool = True

    @property
    def span(self) -> int:
        return self.segment.span

    @property
    def window(self) -> tuple[int, int]:
        return (self.iova, self.iova + self.span)

    def unmap(self) -> None:
        self.iommu.unmap(self)


@dataclass
class BlockedAccess:
    device: str
    iova: int
    length: int
    write: bool


@dataclass
class Iommu:
    mem: MemoryMap
    blocked: list[BlockedAccess] = field(default_factory=list)

    def __post_init__(self):
        self._next = IOVA_BASE
        self._windows: dict[int, DmaMapping] = {}
        self._lock = threading.Lock()

    def map(self, segment: Segment, mode: DmaMode = DmaMode.COHERENT,
            direction: Direction = Direction.BIDIRECTIONAL) -> DmaMapping:
        """Expose ``segment`` to devices. Only untyped memory qualifies."""
        if not segment.is_untyped:
            raise TypedMemoryRejected(f"{segment!r} is typed memory")
        handle = segment.dup()
        with self._lock:
            iova = self._next
            # leave a one-frame hole so windows never touch
            self._next += handle.span + self.mem.frame_size
            m = DmaMapping(self, iova, handle, mode, direction)
            self._windows[iova] = m
        return m

    def unmap(self, mapping: DmaMapping) -> None:
        with self._lock:
            if not mapping.live or self._windows.get(mapping.iova) is not mapping:
                raise NotMapped(f"DMA window at {mapping.iova:#x} is not live")
            del self._windows[mapping.iova]
            mapping.live = False
        mapping.segment.drop()

    def live_mappings(self) -> list[DmaMapping]:
        return list(self._windows.values())

    def device_writable_frames(self) -> set[int]:
        return {f for m in self._windows.values() if m.direction.device_writes for f in m.segment.frames}

    def _lookup(self, iova: int, n: int) -> Optional[DmaMapping]:
        for m in self._windows.values():
            lo, hi = m.window
            if lo <= iova and iova + n <= hi:
                return m
        return None

    def _block(self, device: str, iova: int, n: int, write: bool) -> DmaStatus:
        self.blocked.append(BlockedAccess(device, iova, n, write))
        log.info("blocked DMA %s by %s at %#x+%d", "write" if write else "read", device, iova, n)
        return DmaStatus.BLOCKED

    # device side

    def device_write(self, device: str, iova: int, data: bytes) -> DmaStatus:
        n = len(data)
        with self._lock:
            m = self._lookup(iova, n)
            if m is None or n == 0 or not m.direction.device_writes:
                return self._block(device, iova, n, True)
            self.mem.phys_write(m.segment.addr + (iova - m.iova), bytes(data))
        return DmaStatus.OK

    def device_read(self, device: str, iova: int, n: int) -> tuple[DmaStatus, bytes]:
        with self._lock:
            m = self._lookup(iova, n)
            if m is None or n <= 0 or not m.direction.device_reads:
                return self._block(device, iova, n, False), b""
            return DmaStatus.OK, self.mem.phys_read(m.segment.addr + (iova - m.iova), n)
