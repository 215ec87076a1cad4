"""Find the two undefined-behavior bugs, first in traces and then in live code.

    python demos/ub_oracle.py
"""

from framekernel.frame import frame_from_unused
from framekernel.frame_alloc import BuddyAllocator, register_frame_allocator
from framekernel.mem import MemoryMap
from framekernel.oracle import Kind, attach, cases, check_interleavings
from framekernel.slab import Slab, TypeTag


def traces():
    for name in ("metadata_race_flawed", "metadata_race_fixed", "heap_mutability_flawed", "heap_mutability_fixed"):
        res = check_interleavings(getattr(cases, name)())
        found = res.distinct
        print(f"{name:24} {res.schedules} schedules, {len(found)} finding(s)")
        for v in found:
            print(f"    {v.kind.value} at {v.location} via schedule {v.schedule}: {v.detail}")


def live_race(unsynchronized: bool) -> int:
    mem = MemoryMap(4096, 4)
    mem.unsynchronized_meta = unsynchronized
    with attach(mem) as sess:
        with sess.as_thread(0):
            h = frame_from_unused(mem, 0)
        with sess.as_thread(1):
            h.dup().drop()
    return len(sess.by_kind(Kind.DATA_RACE))


def live_mutability(read_only: bool) -> int:
    mem = MemoryMap(4096, 16)
    register_frame_allocator(mem, BuddyAllocator(4096))
    mem.readonly_heap_exposure = read_only
    with attach(mem) as sess:
        Slab(mem, 64, 8).alloc().into_object(TypeTag(48, 8)).write(0, b"\xff" * 48)
    return len(sess.by_kind(Kind.MUTABILITY))


if __name__ == "__main__":
    traces()
    print(f"live metadata updates: plain {live_race(True)} race(s), atomic {live_race(False)}")
    print(f"live heap exposure: read-only {live_mutability(True)} violation(s), mutable {live_mutability(False)}")
