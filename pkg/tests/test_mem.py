import struct

import pytest
from hypothesis import given, settings, strategies as st

from framekernel.errors import OutOfBounds, OverlappingRegions, SaturationFault, SnapshotError, UnalignedRegion
from framekernel.frame import frame_from_unused, segment_from_unused
from framekernel.mem import (
    FRESH, REF_COUNT_MAX, UNUSED, FrameMeta, FrameState, MemoryMap, MetaTag, TypedKind, diff,
)
from framekernel.oracle import explore

from oracles import ShadowRefs, multinomial


def untyped_meta(refs=1, kind="anon"):
    return FrameMeta(refs, FrameState.untyped(kind), MetaTag(kind, b""))


class TestInit:
    def test_small_map_is_all_unused(self):
        mem = MemoryMap(4096, 4, [(0, 16384)])
        assert [mem.meta_read(f) for f in range(4)] == [FRESH] * 4
        assert mem.unused_frames() == {0, 1, 2, 3}
        assert bytes(mem.store) == bytes(16384)

    def test_overlapping_regions(self):
        with pytest.raises(OverlappingRegions):
            MemoryMap(4096, 4, [(0, 8192), (4096, 8192)])

    def test_unaligned_region(self):
        with pytest.raises(UnalignedRegion):
            MemoryMap(4096, 4, [(100, 4096)])

    def test_region_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            MemoryMap(4096, 4, [(0, 5 * 4096)])

    def test_default_geometry_census(self):
        mem = MemoryMap(4096, 4096, [(0, 16 << 20)])
        assert mem.frame_count == 4096
        assert mem.census() == 0
        assert len(mem.ref_counts()) == 4096

    @pytest.mark.parametrize("fs", [0, 128, 255, 1000, 3000])
    def test_frame_size_must_be_power_of_two_at_least_256(self, fs):
        with pytest.raises(ValueError):
            MemoryMap(fs, 4)

    def test_reserved_metadata_frames_are_typed_and_not_usable(self):
        mem = MemoryMap(4096, 256, reserve_metadata=True)
        n = mem.reserved_frames
        assert n == 256 * 64 // 4096
        for f in range(n):
            meta = mem.meta_read(f)
            assert meta.ref_count == 1 and meta.state == FrameState.typed(TypedKind.METADATA)
            assert not mem.is_usable(f)
        assert mem.usable == [(n * 4096, (256 - n) * 4096)]


class TestMetaRead:
    def test_fresh(self):
        assert MemoryMap(4096, 8).meta_read(0) == FRESH

    def test_after_claim(self):
        mem = MemoryMap(4096, 8)
        frame_from_unused(mem, 2 * 4096)
        meta = mem.meta_read(2)
        assert meta.ref_count == 1 and meta.state.is_untyped

    def test_past_end(self):
        mem = MemoryMap(4096, 8)
        with pytest.raises(OutOfBounds):
            mem.meta_read(8)


class TestTransition:
    def test_claim_then_conflict(self):
        mem = MemoryMap(4096, 4)
        assert mem.meta_transition(0, FRESH, untyped_meta())
        assert not mem.meta_transition(0, FRESH, untyped_meta())
        assert mem.meta_read(0) == untyped_meta()

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            MemoryMap(4096, 4).meta_transition(4, FRESH, untyped_meta())

    def test_inconsistent_new_value_rejected(self):
        mem = MemoryMap(4096, 4)
        with pytest.raises(ValueError):
            mem.meta_transition(0, FRESH, FrameMeta(1, UNUSED, None))
        with pytest.raises(ValueError):
            mem.meta_transition(0, FRESH, FrameMeta(0, FrameState.untyped("anon"), None))

    def test_saturation_faults(self):
        mem = MemoryMap(4096, 4)
        with pytest.raises(SaturationFault):
            mem.meta_transition(0, FRESH, untyped_meta(REF_COUNT_MAX + 1))
        h = frame_from_unused(mem, 0)
        assert mem.meta_transition(0, untyped_meta(), untyped_meta(REF_COUNT_MAX))
        with pytest.raises(SaturationFault):
            h.dup()
        assert mem.meta_read(0).ref_count == REF_COUNT_MAX

    def test_same_expectation_has_exactly_one_winner(self):
        # both threads prepared their transition against the same snapshot
        def make():
            mem = MemoryMap(4096, 2)
            frame_from_unused(mem, 0)
            return {"mem": mem, "won": []}

        def drop_to_zero(s):
            s["won"].append(("drop", s["mem"].meta_transition(0, untyped_meta(1), FRESH)))

        def dup(s):
            s["won"].append(("dup", s["mem"].meta_transition(0, untyped_meta(1), untyped_meta(2))))

        runs = list(explore(make, [[drop_to_zero], [dup]]))
        assert len(runs) == 2
        for _, s in runs:
            assert sum(ok for _, ok in s["won"]) == 1

    def test_read_then_cas_decrement_vs_claim_is_linearizable(self):
        def make():
            mem = MemoryMap(4096, 2)
            frame_from_unused(mem, 0)
            return {"mem": mem, "snap": {}, "ok": {}}

        def snap(t):
            return lambda s: s["snap"].__setitem__(t, s["mem"].meta_read(0))

        def release(s):
            cur = s["snap"]["A"]
            new = FRESH if cur.ref_count == 1 else FrameMeta(cur.ref_count - 1, cur.state, cur.meta_tag)
            s["ok"]["A"] = s["mem"].meta_transition(0, cur, new)

        def claim(s):
            cur = s["snap"]["B"]
            s["ok"]["B"] = cur == FRESH and s["mem"].meta_transition(0, FRESH, untyped_meta())

        seen = set()
        for sched, s in explore(make, [[snap("A"), release], [snap("B"), claim]]):
            final = s["mem"].meta_read(0)
            outcome = (s["ok"]["A"], s["ok"]["B"], final)
            # the only sequential orders: release then claim, or claim (fails) then release
            assert outcome in {(True, True, untyped_meta()), (True, False, FRESH)}, sched
            seen.add(outcome[:2])
        assert seen == {(True, True), (True, False)}

    def test_three_thread_increments_linearize(self):
        def make():
            mem = MemoryMap(4096, 1)
            frame_from_unused(mem, 0)
            return {"mem": mem, "snap": {}, "wins": 0}

        def steps(t):
            def read(s):
                s["snap"][t] = s["mem"].meta_read(0)

            def cas(s):
                cur = s["snap"][t]
                s["wins"] += s["mem"].meta_transition(0, cur, FrameMeta(cur.ref_count + 1, cur.state, cur.meta_tag))

            return [read, cas]

        n = 0
        for _, s in explore(make, [steps(0), steps(1), steps(2)]):
            n += 1
            assert s["wins"] >= 1
            assert s["mem"].meta_read(0).ref_count == 1 + s["wins"]
        assert n == multinomial([2, 2, 2])


class TestSnapshot:
    def test_header_is_little_endian(self):
        blob = MemoryMap(4096, 3).dump()
        assert blob[:4] == b"FKMM"
        assert struct.unpack_from("<HII", blob, 4) == (1, 4096, 3)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 15), st.integers(1, 3), st.binary(max_size=64)), max_size=12))
    def test_dump_load_dump_is_identity(self, claims):
        mem = MemoryMap(256, 16)
        mem.register_meta_kind("tagged", 8)
        handles = []
        for first, n, data in claims:
            try:
                h = segment_from_unused(mem, first * 256, n, "anon")
            except Exception:
                continue
            h.write_bytes(0, data)
            handles.append(h)
        if handles:
            handles[0].dup()
        blob = mem.dump()
        again = MemoryMap.load(blob)
        assert again.dump() == blob
        assert diff(mem, again) == []

    def test_payloads_survive(self):
        mem = MemoryMap(256, 4)
        mem.register_meta_kind("tagged", 4)
        frame_from_unused(mem, 256, "tagged", b"\x01\x02\x03\x04")
        again = MemoryMap.load(mem.dump())
        assert again.meta_read(1) == mem.meta_read(1)

    def test_bad_blobs(self):
        blob = MemoryMap(256, 2).dump()
        with pytest.raises(SnapshotError):
            MemoryMap.load(b"XXXX" + blob[4:])
        with pytest.raises(SnapshotError):
            MemoryMap.load(blob[:-1])
        with pytest.raises(SnapshotError):
            MemoryMap.load(blob[:10])

    def test_diff_reports_changed_frames(self):
        a = MemoryMap(256, 4)
        b = MemoryMap.load(a.dump())
        h = frame_from_unused(b, 512)
        h.write_bytes(0, b"abc")
        deltas = diff(a, b)
        assert [d.frame for d in deltas] == [2]
        assert deltas[0].bytes_changed == 3
        assert "frame 2" in str(deltas[0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["claim", "dup", "drop"]), st.integers(0, 15), st.integers(1, 4)),
                max_size=60))
def test_census_matches_shadow(ops):
    mem = MemoryMap(256, 16)
    shadow = ShadowRefs(16)
    handles = []
    for verb, a, n in ops:
        if verb == "claim":
            want = shadow.claim(a, n)
            try:
                handles.append(segment_from_unused(mem, a * 256, n))
                got = "ok"
            except Exception as exc:
                got = type(exc).__name__
            assert got == want
        elif handles:
            h = handles[a % len(handles)]
            if verb == "dup":
                handles.append(h.dup())
                shadow.dup(h.first_frame, h.nframes)
            else:
                handles.remove(h)
                h.drop()
                shadow.drop(h.first_frame, h.nframes)
        assert mem.ref_counts() == shadow.refs
        assert mem.unused_frames() == shadow.unused
        for f in range(16):
            meta = mem.meta_read(f)
            assert (meta.ref_count > 0) == (not meta.state.is_unused)
