import random

import pytest
from hypothesis import given, settings, strategies as st

from framekernel.errors import (
    AlreadyRegistered, BadLayout, NotRegistered, PolicyExhausted, PolicyUnsound, ReentrantCall, TooLate,
)
from framekernel.frame import frame_from_unused
from framekernel.frame_alloc import (
    AllocLayout, BuddyAllocator, alloc_frames, register_frame_allocator, registered_allocator, unsound_count,
)
from framekernel.mem import MemoryMap

from oracles import ShadowRefs

FS = 4096


class Recording(BuddyAllocator):
    def __init__(self):
        super().__init__(FS)
        self.regions, self.claims, self.frees = [], [], []

    def add_free_memory(self, addr, size):
        self.regions.append((addr, size))
        super().add_free_memory(addr, size)

    def alloc(self, layout):
        addr = super().alloc(layout)
        if addr is not None:
            self.claims.append((addr, layout.size))
        return addr

    def dealloc(self, addr, size):
        self.frees.append((addr, size))
        super().dealloc(addr, size)


class Scripted:
    """Returns whatever address is next in its script."""

    def __init__(self, answers):
        self.answers = list(answers)
        self.frees = []

    def add_free_memory(self, addr, size):
        pass

    def alloc(self, layout):
        return self.answers.pop(0) if self.answers else None

    def dealloc(self, addr, size):
        self.frees.append((addr, size))


def buddy_mem(frames=64, usable=None):
    mem = MemoryMap(FS, frames, usable)
    alloc = Recording()
    register_frame_allocator(mem, alloc)
    return mem, alloc


class TestRegistration:
    def test_allocator_sees_usable_regions(self):
        regions = [(0, 4 * FS), (8 * FS, 8 * FS)]
        mem, alloc = buddy_mem(16, regions)
        assert alloc.regions == regions
        assert registered_allocator(mem) is alloc

    def test_twice(self):
        mem, _ = buddy_mem()
        with pytest.raises(AlreadyRegistered):
            register_frame_allocator(mem, BuddyAllocator(FS))

    def test_after_claim(self):
        mem = MemoryMap(FS, 4)
        frame_from_unused(mem, 0)
        with pytest.raises(TooLate):
            register_frame_allocator(mem, BuddyAllocator(FS))

    def test_alloc_without_allocator(self):
        with pytest.raises(NotRegistered):
            alloc_frames(MemoryMap(FS, 4), AllocLayout.frames(1))


class TestAllocFrames:
    def test_lowest_address_first_on_fresh_map(self):
        mem, _ = buddy_mem(32)
        shadow_free = set(range(32))
        for _ in range(32):
            seg = alloc_frames(mem, AllocLayout.frames(1))
            assert seg.first_frame == min(shadow_free)
            shadow_free.remove(seg.first_frame)
        with pytest.raises(PolicyExhausted):
            alloc_frames(mem, AllocLayout.frames(1))

    def test_bad_layouts(self):
        mem, _ = buddy_mem()
        for layout in (AllocLayout(0, FS), AllocLayout(100, FS), AllocLayout(FS, 2048), AllocLayout(FS, 3 * FS)):
            with pytest.raises(BadLayout):
                alloc_frames(mem, layout)

    def test_in_use_proposal_is_unsound_and_harmless(self):
        mem = MemoryMap(FS, 8)
        policy = Scripted([0, 0])
        register_frame_allocator(mem, policy)
        first = alloc_frames(mem, AllocLayout.frames(1))
        before = mem.dump()
        with pytest.raises(PolicyUnsound):
            alloc_frames(mem, AllocLayout.frames(1))
        assert mem.dump() == before
        assert unsound_count(mem) == 1
        assert first.is_live

    @pytest.mark.parametrize("answer", [FS * 100, -FS, FS // 2, "0x1000", 3 * FS])
    def test_bad_proposals(self, answer):
        mem = MemoryMap(FS, 8, [(0, 2 * FS)])
        register_frame_allocator(mem, Scripted([answer]))
        with pytest.raises(PolicyUnsound):
            alloc_frames(mem, AllocLayout.frames(1))
        assert mem.census() == 0

    def test_exhausted(self):
        mem = MemoryMap(FS, 8)
        register_frame_allocator(mem, Scripted([]))
        with pytest.raises(PolicyExhausted):
            alloc_frames(mem, AllocLayout.frames(1))

    def test_dealloc_once_per_claim_with_same_range(self):
        mem, alloc = buddy_mem(64)
        rng = random.Random(1)
        live = []
        for _ in range(500):
            if live and rng.random() < 0.5:
                seg = live.pop(rng.randrange(len(live)))
                twin = seg.dup()
                seg.drop()
                twin.drop()
            else:
                try:
                    live.append(alloc_frames(mem, AllocLayout.frames(rng.choice([1, 2, 4]))))
                except PolicyExhausted:
                    pass
        for seg in live:
            seg.drop()
        assert sorted(alloc.frees) == sorted(alloc.claims)
        assert mem.census() == 0
        assert alloc.free_bytes == 64 * FS

    def test_dealloc_during_alloc_is_refused(self):
        mem = MemoryMap(FS, 8)
        policy = Scripted([0])
        register_frame_allocator(mem, policy)
        seg = alloc_frames(mem, AllocLayout.frames(1))

        def reenter(layout):
            seg.drop()
            return FS

        policy.alloc = reenter
        with pytest.raises(ReentrantCall):
            alloc_frames(mem, AllocLayout.frames(1))


class TestBuddy:
    def test_hand_traced_split(self):
        b = BuddyAllocator(FS)
        b.add_free_memory(0, 16 * FS)
        got = [b.alloc(AllocLayout.frames(n)) for n in (4, 4, 8)]
        assert got == [0, 4 * FS, 8 * FS]
        assert b.alloc(AllocLayout.frames(1)) is None

    def test_free_remerges(self):
        b = BuddyAllocator(FS)
        b.add_free_memory(0, 16 * FS)
        before = b.free_blocks()
        addrs = [b.alloc(AllocLayout.frames(1)) for _ in range(5)]
        for a in addrs:
            b.dealloc(a, FS)
        assert b.free_blocks() == before == [(4, 0)]

    def test_tie_goes_to_lowest(self):
        b = BuddyAllocator(FS)
        b.add_free_memory(8 * FS, 2 * FS)
        b.add_free_memory(0, 2 * FS)
        assert b.alloc(AllocLayout.frames(2)) == 0

    def test_alignment_honoured(self):
        b = BuddyAllocator(FS)
        b.add_free_memory(0, 64 * FS)
        b.alloc(AllocLayout.frames(1))
        assert b.alloc(AllocLayout.frames(1, FS, 16 * FS)) % (16 * FS) == 0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.integers(1, 8), st.integers(0, 100)), max_size=80))
    def test_conservation(self, ops):
        b = BuddyAllocator(FS)
        b.add_free_memory(0, 64 * FS)
        live = []
        for is_alloc, n, pick in ops:
            if is_alloc or not live:
                addr = b.alloc(AllocLayout.frames(n))
                if addr is not None:
                    live.append((addr, n * FS))
            else:
                b.dealloc(*live.pop(pick % len(live)))
            assert b.free_bytes + b.allocated_bytes == 64 * FS
            blocks = sorted((a, a + s) for a, s in live)
            assert all(x[1] <= y[0] for x, y in zip(blocks, blocks[1:]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.one_of(st.integers(-2, 20).map(lambda f: f * FS), st.integers(0, 20 * FS)), max_size=30),
       st.randoms(use_true_random=False))
def test_guard_holds_for_arbitrary_policies(answers, rng):
    mem = MemoryMap(FS, 16)
    register_frame_allocator(mem, Scripted(answers))
    handles = []
    for _ in range(len(answers)):
        before = set(mem.unused_frames())
        n = rng.choice([1, 2])
        try:
            seg = alloc_frames(mem, AllocLayout.frames(n))
        except (PolicyUnsound, PolicyExhausted):
            assert mem.unused_frames() == before
            continue
        assert set(seg.frames) <= before
        assert all(0 <= f < 16 for f in seg.frames)
        handles.append(seg)
        if rng.random() < 0.3:
            handles.pop(0).drop()


def test_random_alloc_free_against_shadow():
    mem, alloc = buddy_mem(64)
    shadow = ShadowRefs(64)
    rng = random.Random(11)
    live = []
    for _ in range(10_000):
        if live and rng.random() < 0.5:
            seg = live.pop(rng.randrange(len(live)))
            seg.drop()
            shadow.drop(seg.first_frame, seg.nframes)
        else:
            n = rng.choice([1, 1, 2, 4])
            try:
                seg = alloc_frames(mem, AllocLayout.frames(n))
            except PolicyExhausted:
                continue
            assert shadow.claim(seg.first_frame, n) == "ok"
            live.append(seg)
    assert unsound_count(mem) == 0
    assert mem.ref_counts() == shadow.refs
