"""Slabs, heap slots and heap objects.

The framework side of slab allocation. A :class:`Slab` owns typed frames
cut into equal slots and counts the slots it has handed out; policies
(which slab to use, when to grow) live in :mod:`framekernel.slab.heap`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

from .._checks import CHECKS
from ..errors import (
    ActiveSlotsRemain,
    BadGeometry,
    DoubleFree,
    Exhausted,
    ForeignSlot,
    Misfit,
    OutOfBounds,
    PolicyExhausted,
    SlabFull,
    StaleHandle,
)
from ..frame import Segment
from ..frame_alloc import AllocLayout, alloc_frames
from ..mem import MemoryMap


@dataclass(frozen=True)
class TypeTag:
    """Size and alignment of a value to be placed in a slot."""

    size: int
    align: int = 1


def fits(slot_size: int, slot_addr: int, tag: TypeTag) -> bool:
    """The slot-fit predicate."""
    return tag.size <= slot_size and slot_addr % tag.align == 0


class Slab:
    """One or more contiguous typed frames split into ``slot_count`` slots."""

    __slots__ = ("_backing", "mem", "slot_size", "slot_count", "base", "span", "_free", "_live", "_lock", "_fit_tag")

    def __init__(self, mem: MemoryMap, slot_size: int, slot_count: int):
        if slot_size < 1 or slot_count < 1:
            raise BadGeometry(f"slot_size={slot_size}, slot_count={slot_count}")
        fs = mem.frame_size
        nframes = -(-slot_size * slot_count // fs)
        try:
            self._backing: Optional[Segment] = alloc_frames(mem, AllocLayout(nframes * fs, fs), "slab")
        except PolicyExhausted as exc:
            raise Exhausted(str(exc)) from exc
        self.mem = mem
        self.slot_size = slot_size
        self.slot_count = slot_count
        self.base = self._backing.addr
        self.span = self._backing.span
        # lowest index first
        self._free = list(range(slot_count - 1, -1, -1))
        self._live: set[int] = set()
        self._lock = threading.Lock()
        # last tag known to fit every slot (tags are immutable)
        self._fit_tag: Optional[TypeTag] = None
        if mem.tracer is not None:
            mem.tracer.expose(self.base, self.base + self.span, mutable=not mem.readonly_heap_exposure)

    def __repr__(self):
        return f"Slab(base={self.base:#x}, slot_size={self.slot_size}, active={self.active}/{self.slot_count})"

    @property
    def active(self) -> int:
        return self.slot_count - len(self._free)

    @property
    def backing(self) -> Optional[Segment]:
        return self._backing

    @property
    def is_live(self) -> bool:
        return self._backing is not None

    @property
    def has_free(self) -> bool:
        return bool(self._free)

    def alloc(self) -> "HeapSlot":
        with self._lock:
            if self._backing is None:
                raise StaleHandle("slab already dropped")
            if not self._free:
                raise SlabFull(repr(self))
            index = self._free.pop()
            self._live.add(index)
        return HeapSlot(self, index, self.base + index * self.slot_size, self.slot_size)

    def dealloc(self, slot: "HeapSlot") -> None:
        if slot.parent is not self:
            raise ForeignSlot(f"slot {slot.index} belongs to {slot.parent!r}")
        with self._lock:
            if slot.index not in self._live:
                raise DoubleFree(f"slot {slot.index} of {self!r} is not live")
            if slot._consumed:
                raise StaleHandle(f"slot {slot.index} holds an object; free the object instead")
            self._live.remove(slot.index)
            self._free.append(slot.index)
            slot._consumed = True

    def _admit(self, tag: TypeTag, addr: int) -> bool:
        if not fits(self.slot_size, addr, tag):
            return False
        if self.slot_size % tag.align == 0 and self.base % tag.align == 0:
            self._fit_tag = tag
        return True

    def drop(self) -> None:
        """Release the backing frames. Faults while any slot is still out."""
        with self._lock:
            if self._backing is None:
                raise StaleHandle("slab already dropped")
            if self._live:
                raise ActiveSlotsRemain(f"{self!r} dropped with {len(self._live)} active slots")
            backing, self._backing = self._backing, None
        backing.drop()


class HeapSlot:
    """A free slot handed out by a slab, waiting to receive an object."""

    __slots__ = ("parent", "index", "addr", "size", "_consumed")

    def __init__(self, parent: Slab, index: int, addr: int, size: int):
        self.parent = parent
        self.index = index
        self.addr = addr
        self.size = size
        self._consumed = False

    def __repr__(self):
        return f"HeapSlot(addr={self.addr:#x}, size={self.size})"

    def into_object(self, tag: TypeTag) -> "HeapObject":
        """Place a value described by ``tag`` into this slot, consuming it."""
        if self._consumed:
            raise StaleHandle(f"{self!r} already consumed")
        if CHECKS.enabled and tag is not self.parent._fit_tag and not self.parent._admit(tag, self.addr):
            raise Misfit(f"{tag} does not fit {self!r}")
        self._consumed = True
        return HeapObject(self, tag, self.addr)


class HeapObject:
    """Bytes owned by one value, in a slot or (for large objects) whole frames."""

    __slots__ = ("slot", "tag", "addr", "segment", "_live")

    def __init__(self, slot: Optional[HeapSlot], tag: TypeTag, addr: int, segment: Optional[Segment] = None):
        self.slot = slot
        self.tag = tag
        self.addr = addr
        self.segment = segment
        self._live = True

    def __repr__(self):
        return f"HeapObject(addr={self.addr:#x}, size={self.tag.size})"

    @property
    def mem(self) -> MemoryMap:
        return self.segment.mem if self.segment is not None else self.slot.parent.mem

    @property
    def is_live(self) -> bool:
        return self._live

    def _check(self, offset: int, n: int) -> None:
        if not self._live:
            raise StaleHandle(f"{self!r} used after free")
        if offset < 0 or n < 0 or offset + n > self.tag.size:
            raise OutOfBounds(f"[{offset}, {offset}+{n}) outside object of {self.tag.size} bytes")

    def write(self, offset: int, data: bytes) -> None:
        self._check(offset, len(data))
        self.mem.phys_write(self.addr + offset, data)

    def read(self, offset: int = 0, n: Optional[int] = None) -> bytes:
        if n is None:
            n = self.tag.size - offset
        self._check(offset, n)
        return self.mem.phys_read(self.addr + offset, n)

    def into_slot(self) -> HeapSlot:
        """Give up the value and get the (still allocated) slot back."""
        if not self._live or self.slot is None:
            raise StaleHandle(f"{self!r} has no slot to return")
        self._live = False
        self.slot._consumed = False
        return self.slot

    def free(self) -> None:
        """Return the memory: the slot to its slab, or the frames to the allocator."""
        if not self._live:
            raise DoubleFree(f"{self!r} freed twice")
        if self.segment is not None:
            self._live = False
            self.segment.drop()
        else:
            self.into_slot().parent.dealloc(self.slot)
