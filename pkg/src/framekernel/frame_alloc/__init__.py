"""Frame allocator injection.

An allocator policy only ever proposes addresses. The framework turns a
proposal into a handle through :func:`~framekernel.frame.segment_from_unused`,
so a buggy policy gets :class:`PolicyUnsound` back instead of handing out
memory that is already in use.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Optional, Protocol

from .._checks import CHECKS
from ..errors import (
    AlreadyRegistered,
    BadLayout,
    InUse,
    NotRegistered,
    PolicyExhausted,
    PolicyUnsound,
    ReentrantCall,
    TooLate,
    OutOfRange,
    Unaligned,
)
from ..frame import Payloads, Segment, segment_from_unused
from ..mem import MemoryMap
from .buddy import BuddyAllocator

log = logging.getLogger(__name__)

__all__ = [
    "AllocLayout",
    "BuddyAllocator",
    "FrameAlloc",
    "alloc_frames",
    "register_frame_allocator",
    "registered_allocator",
]


@dataclass(frozen=True)
class AllocLayout:
    size: int
    align: int

    @classmethod
    def frames(cls, n: int, frame_size: int = 4096, align: Optional[int] = None) -> "AllocLayout":
        return cls(n * frame_size, align or frame_size)


class FrameAlloc(Protocol):
    def alloc(self, layout: AllocLayout) -> Optional[int]: ...

    def dealloc(self, addr: int, size: int) -> None: ...

    def add_free_memory(self, addr: int, size: int) -> None: ...


class _Slot:
    """The registered allocator plus the bookkeeping the framework keeps about it."""

    def __init__(self, mem: MemoryMap, allocator: FrameAlloc):
        self.mem = mem
        self.allocator = allocator
        self.lock = threading.RLock()
        self.in_alloc = False
        self.unsound = 0
        self.deallocs = 0

    def release(self, addr: int, size: int) -> None:
        with self.lock:
            if self.in_alloc:
                raise ReentrantCall("dealloc invoked from inside alloc")
            self.deallocs += 1
            self.allocator.dealloc(addr, size)


_register_lock = threading.Lock()


def register_frame_allocator(mem: MemoryMap, allocator: FrameAlloc) -> None:
    """Install ``allocator`` for ``mem`` and hand it every usable region."""
    with _register_lock:
        if mem.alloc_slot is not None:
            raise AlreadyRegistered("a frame allocator is already registered")
        if mem.ever_claimed:
            raise TooLate("frames were claimed before the allocator was registered")
        slot = mem.alloc_slot = _Slot(mem, allocator)
    for addr, length in mem.usable:
        allocator.add_free_memory(addr, length)
    mem.release_hook = slot.release


def _slot(mem: MemoryMap) -> _Slot:
    slot = mem.alloc_slot
    if slot is None:
        raise NotRegistered("no frame allocator registered")
    return slot


def registered_allocator(mem: MemoryMap) -> FrameAlloc:
    return _slot(mem).allocator


def unsound_count(mem: MemoryMap) -> int:
    """How many proposals from the policy failed validation so far."""
    return _slot(mem).unsound


def alloc_frames(mem: MemoryMap, layout: AllocLayout, meta_kind: str = "anon", metas: Payloads = None) -> Segment:
    """Allocate frames through the injected policy and validate the result."""
    slot = _slot(mem)
    fs = mem.frame_size
    if layout.size <= 0 or layout.size % fs or layout.align < fs or layout.align & (layout.align - 1):
        raise BadLayout(f"{layout} is not a frame-granular layout")
    with slot.lock:
        slot.in_alloc = True
        try:
            addr = slot.allocator.alloc(layout)
        finally:
            slot.in_alloc = False
    if addr is None:
        raise PolicyExhausted(f"allocator has no room for {layout}")
    nframes = layout.size // fs
    if CHECKS.enabled and (not isinstance(addr, int) or addr % layout.align):
        slot.unsound += 1
        log.warning("frame allocator returned misaligned address %r for %s", addr, layout)
        raise PolicyUnsound(f"address {addr!r} violates {layout}")
    try:
        return segment_from_unused(mem, addr, nframes, meta_kind, metas, _from_allocator=True)
    except (InUse, OutOfRange, Unaligned) as exc:
        # the policy believes the range is allocated; it stays leaked on the policy side
        slot.unsound += 1
        log.warning("frame allocator returned unusable range %#x+%d: %s", addr, layout.size, exc)
        raise PolicyUnsound(f"allocator returned {addr:#x}: {exc}") from exc
