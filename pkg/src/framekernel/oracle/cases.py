"""Event patterns of two known undefined-behavior bugs and their fixes.

Each pattern is a minimal event skeleton of the faulty code path, not a
recording of real execution.

Metadata race: ``drop`` decrements a frame's reference count with a plain
load and store while ``from_unused`` checks the same count with a plain
load and claims it with a plain store. The fixed variant turns every one of
those accesses into a compare-and-exchange.

Mutability: heap initialization exposes the heap range through a read-only
pointer, and a later allocation writes into it. The fixed variant exposes
it as mutable.
"""

from .events import ByteWrite, ExposeMutable, ExposeReadOnly, MetaCAS, MetaRead, MetaWrite

FRAME = 7
HEAP = (0x10_0000, 0x10_0000 + 64 * 4096)


def metadata_race_flawed(frame: int = FRAME):
    drop = [MetaRead(frame, 0), MetaWrite(frame, 0)]
    from_unused = [MetaRead(frame, 1), MetaWrite(frame, 1)]
    return [drop, from_unused]


def metadata_race_fixed(frame: int = FRAME):
    drop = [MetaCAS(frame, 0), MetaCAS(frame, 0)]
    from_unused = [MetaCAS(frame, 1), MetaCAS(frame, 1)]
    return [drop, from_unused]


def heap_mutability_flawed(heap=HEAP):
    lo, hi = heap
    return [[ExposeReadOnly(lo, hi, 0), ByteWrite(lo + 64, lo + 112, 0)]]


def heap_mutability_fixed(heap=HEAP):
    lo, hi = heap
    return [[ExposeMutable(lo, hi, 0), ByteWrite(lo + 64, lo + 112, 0)]]
