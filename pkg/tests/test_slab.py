import random

import pytest
from hypothesis import given, settings, strategies as st

from framekernel.errors import (
    ActiveSlotsRemain, AlreadyRegistered, BadGeometry, DoubleFree, Exhausted, ForeignSlot, Misfit, NotRegistered,
    SlabFull, StaleHandle, TypedAccessRejected,
)
from framekernel.frame_alloc import BuddyAllocator, register_frame_allocator
from framekernel.mem import MemoryMap, TypedKind
from framekernel.slab import Slab, TypeTag, fits
from framekernel.slab.heap import GlobalHeap, SlabCache, global_heap_register, heap_alloc

from oracles import disjoint, fit

FS = 4096
ALIGNS = (1, 2, 4, 8, 16, 64)


def make_mem(frames=256):
    mem = MemoryMap(FS, frames)
    register_frame_allocator(mem, BuddyAllocator(FS))
    return mem


class TestSlab:
    def test_one_frame_geometry(self):
        mem = make_mem()
        s = Slab(mem, 64, 64)
        assert s.backing.nframes == 1 and s.active == 0
        assert all(mem.meta_read(f).state.is_typed for f in s.backing.frames)
        assert mem.meta_read(s.backing.first_frame).state.tag == TypedKind.SLAB

    def test_two_frame_geometry(self):
        assert Slab(make_mem(), 4096, 2).backing.nframes == 2

    def test_remainder_rounds_up(self):
        assert Slab(make_mem(), 100, 50).backing.nframes == 2

    @pytest.mark.parametrize("size,count", [(0, 4), (8, 0), (-1, 1)])
    def test_bad_geometry(self, size, count):
        with pytest.raises(BadGeometry):
            Slab(make_mem(), size, count)

    def test_exhausted(self):
        with pytest.raises(Exhausted):
            Slab(make_mem(2), 4096, 4)

    def test_pigeonhole(self):
        s = Slab(make_mem(), 64, 64)
        slots = [s.alloc() for _ in range(64)]
        with pytest.raises(SlabFull):
            s.alloc()
        assert [x.addr for x in slots] == [s.base + 64 * i for i in range(64)]

    def test_dealloc(self):
        s = Slab(make_mem(), 64, 64)
        a = s.alloc()
        s.alloc()
        s.dealloc(a)
        assert s.active == 1

    def test_foreign_and_double(self):
        mem = make_mem()
        s1, s2 = Slab(mem, 64, 64), Slab(mem, 64, 64)
        a = s1.alloc()
        with pytest.raises(ForeignSlot):
            s2.dealloc(a)
        s1.dealloc(a)
        with pytest.raises(DoubleFree):
            s1.dealloc(a)

    def test_drop_empty_returns_frames(self):
        mem = make_mem()
        s = Slab(mem, 64, 64)
        assert mem.census() == 1
        s.drop()
        assert mem.census() == 0
        with pytest.raises(StaleHandle):
            s.alloc()

    def test_drop_with_active_slot_faults(self):
        mem = make_mem()
        s = Slab(mem, 64, 64)
        s.alloc()
        with pytest.raises(ActiveSlotsRemain):
            s.drop()
        assert mem.census() == 1 and s.is_live

    @pytest.mark.parametrize("k", range(0, 65, 8))
    def test_alloc_dealloc_then_drop(self, k):
        mem = make_mem()
        s = Slab(mem, 64, 64)
        for slot in [s.alloc() for _ in range(k)]:
            s.dealloc(slot)
        s.drop()
        assert mem.census() == 0

    def test_backing_never_exposed_as_untyped(self):
        s = Slab(make_mem(), 64, 64)
        with pytest.raises(TypedAccessRejected):
            s.backing.read_bytes(0, 1)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 1000), max_size=200))
    def test_active_matches_shadow_and_slots_are_disjoint(self, picks):
        s = Slab(make_mem(), 48, 32)
        live = []
        for p in picks:
            if p % 3 == 0 and live:
                s.dealloc(live.pop(p % len(live)))
            elif s.has_free:
                live.append(s.alloc())
            assert s.active == len(live)
            assert disjoint([(x.addr, x.addr + x.size) for x in live])


class TestFit:
    def test_48_byte_object_in_64_byte_slot(self):
        s = Slab(make_mem(), 64, 64)
        obj = s.alloc().into_object(TypeTag(48, 8))
        assert obj.addr % 8 == 0

    def test_too_big(self):
        s = Slab(make_mem(), 64, 64)
        with pytest.raises(Misfit):
            s.alloc().into_object(TypeTag(72, 8))

    def test_grid_matches_predicate(self):
        mem = make_mem(1024)
        slabs = [Slab(mem, 64, 64) for _ in range(2)]
        odd = Slab(mem, 24, 100)  # slot addresses at multiples of 24
        slots = [sl.alloc() for sl in slabs] + [odd.alloc() for _ in range(3)]
        checked = 0
        for slot in slots:
            for size in range(1, 129):
                for align in ALIGNS:
                    want = fit(slot.size, slot.addr, size, align)
                    assert fits(slot.size, slot.addr, TypeTag(size, align)) == want
                    try:
                        obj = slot.into_object(TypeTag(size, align))
                        got = True
                        obj.into_slot()
                    except Misfit:
                        got = False
                    assert got == want, (slot, size, align)
                    checked += 1
        assert checked == len(slots) * 128 * len(ALIGNS)

    def test_slot_is_consumed(self):
        s = Slab(make_mem(), 64, 4)
        slot = s.alloc()
        obj = slot.into_object(TypeTag(8))
        with pytest.raises(StaleHandle):
            slot.into_object(TypeTag(8))
        with pytest.raises(StaleHandle):
            s.dealloc(slot)
        obj.free()
        assert s.active == 0
        with pytest.raises(DoubleFree):
            obj.free()

    def test_object_bounds(self):
        obj = Slab(make_mem(), 64, 4).alloc().into_object(TypeTag(16))
        obj.write(0, b"x" * 16)
        assert obj.read() == b"x" * 16
        with pytest.raises(Exception):
            obj.write(10, b"y" * 7)


class TestGlobalHeap:
    def test_smallest_class(self):
        heap = GlobalHeap(make_mem(), (16, 32, 64, 128))
        assert heap.class_for(TypeTag(48, 8)) == 64
        assert heap.alloc(TypeTag(48, 8)).slot.size == 64

    def test_large_goes_to_frames(self):
        mem = make_mem()
        heap = GlobalHeap(mem, (16, 32, 64, 128))
        obj = heap.alloc(TypeTag(4097, 8))
        assert obj.slot is None and obj.segment.nframes == 2
        obj.free()
        assert mem.census() == 0

    def test_alignment_pushes_to_larger_class(self):
        heap = GlobalHeap(make_mem(), (24, 48, 64))
        assert heap.class_for(TypeTag(8, 16)) == 48
        assert heap.class_for(TypeTag(8, 64)) == 64
        assert heap.class_for(TypeTag(8, 128)) is None

    def test_classes_must_increase(self):
        with pytest.raises(ValueError):
            GlobalHeap(make_mem(), (32, 16))

    def test_registration(self):
        mem = make_mem()
        with pytest.raises(NotRegistered):
            heap_alloc(mem, TypeTag(8))
        global_heap_register(mem)
        heap_alloc(mem, TypeTag(8))
        with pytest.raises(AlreadyRegistered):
            global_heap_register(mem)

    def test_cache_grows_and_shrinks(self):
        mem = make_mem()
        cache = SlabCache(mem, 1024)
        slots = [cache.alloc() for _ in range(9)]
        assert len(cache.slabs) == 3
        for s in slots:
            cache.dealloc(s)
        assert cache.shrink() == 3 and mem.census() == 0

    def test_mixed_workload_fits_and_never_overlaps(self):
        mem = make_mem(2048)
        heap = global_heap_register(mem)
        rng = random.Random(3)
        live = []
        for _ in range(10_000):
            if live and rng.random() < 0.45:
                live.pop(rng.randrange(len(live))).free()
                continue
            tag = TypeTag(rng.randint(1, 3000), rng.choice(ALIGNS))
            obj = heap.alloc(tag)
            assert obj.addr % tag.align == 0
            if obj.slot is not None:
                assert fit(obj.slot.size, obj.addr, tag.size, tag.align)
            live.append(obj)
        spans = [(o.addr, o.addr + (o.slot.size if o.slot else o.segment.span)) for o in live]
        assert disjoint(spans)
