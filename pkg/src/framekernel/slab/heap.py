"""Reference slab caches and the size-class global heap.

Policy code: it decides which slab serves a request and when to grow, and
relies on :class:`~framekernel.slab.Slab` for every safety check.
"""

from __future__ import annotations

import threading
from typing import Optional, Sequence

from ..errors import AlreadyRegistered, NotRegistered
from ..frame_alloc import AllocLayout, alloc_frames
from ..mem import MemoryMap
from . import HeapObject, HeapSlot, Slab, TypeTag

DEFAULT_CLASSES = (16, 32, 64, 128, 256, 512, 1024, 2048)


class SlabCache:
    """Slabs of one slot size; one shared free list (no per-CPU caching)."""

    def __init__(self, mem: MemoryMap, slot_size: int, slots_per_slab: Optional[int] = None):
        self.mem = mem
        self.slot_size = slot_size
        self.slots_per_slab = slots_per_slab or max(1, mem.frame_size // slot_size)
        self.slabs: list[Slab] = []
        self._lock = threading.Lock()

    def alloc(self) -> HeapSlot:
        with self._lock:
            for slab in self.slabs:
                if slab.has_free:
                    return slab.alloc()
            slab = Slab(self.mem, self.slot_size, self.slots_per_slab)
            self.slabs.append(slab)
            return slab.alloc()

    def dealloc(self, slot: HeapSlot) -> None:
        slot.parent.dealloc(slot)

    def shrink(self) -> int:
        """Drop empty slabs; returns how many were released."""
        with self._lock:
            keep, dropped = [], 0
            for slab in self.slabs:
                if slab.active == 0:
                    slab.drop()
                    dropped += 1
                else:
                    keep.append(slab)
            self.slabs = keep
            return dropped


class GlobalHeap:
    """Dispatches each request to the smallest size class that can hold it."""

    def __init__(self, mem: MemoryMap, size_classes: Sequence[int] = DEFAULT_CLASSES):
        classes = list(size_classes)
        if not classes or any(b <= a for a, b in zip(classes, classes[1:])) or classes[0] < 1:
            raise ValueError(f"size classes must be positive and strictly increasing: {classes}")
        self.mem = mem
        self.classes = classes
        self.caches = {c: SlabCache(mem, c) for c in classes}

    def class_for(self, tag: TypeTag) -> Optional[int]:
        """Smallest class whose every slot can hold ``tag``; None means the frame path."""
        if tag.align > self.mem.frame_size:
            return None
        for c in self.classes:
            # slots sit at base + i*c with a frame-aligned base
            if c >= tag.size and c % tag.align == 0:
                return c
        return None

    def alloc(self, tag: TypeTag) -> HeapObject:
        c = self.class_for(tag)
        if c is None:
            return self._alloc_direct(tag)
        return self.caches[c].alloc().into_object(tag)

    def _alloc_direct(self, tag: TypeTag) -> HeapObject:
        fs = self.mem.frame_size
        size = -(-max(tag.size, 1) // fs) * fs
        seg = alloc_frames(self.mem, AllocLayout(size, max(fs, tag.align)), "slab")
        return HeapObject(None, tag, seg.addr, seg)

    def free(self, obj: HeapObject) -> None:
        obj.free()


def global_heap_register(mem: MemoryMap, size_classes: Sequence[int] = DEFAULT_CLASSES) -> GlobalHeap:
    if mem.heap is not None:
        raise AlreadyRegistered("global heap already registered")
    mem.heap = GlobalHeap(mem, size_classes)
    return mem.heap


def heap_alloc(mem: MemoryMap, tag: TypeTag) -> HeapObject:
    if mem.heap is None:
        raise NotRegistered("no global heap registered")
    return mem.heap.alloc(tag)
