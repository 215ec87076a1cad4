"""Counted frame and segment handles, and the untyped-memory interface.

Every handle counts once in the reference count of each frame it covers.
Handles are created only by claiming currently-unused frames
(:func:`segment_from_unused`), and the last drop returns the frames to the
unused pool. Byte access is copy-in/copy-out and only exists for handles to
untyped memory.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

from ._checks import CHECKS
from .errors import (
    InUse,
    Misaligned,
    OutOfBounds,
    OutOfRange,
    StaleHandle,
    TypedAccessRejected,
    Unaligned,
)
from .mem import FRESH, FrameMeta, MemoryMap, MetaKind, MetaTag
from .pod import Pod

Payloads = Union[None, bytes, Sequence[Optional[bytes]]]


class Segment:
    """A counted handle to one or more contiguous frames."""

    __slots__ = ("_mem", "first_frame", "nframes", "kind", "addr", "span", "_untyped", "_live", "from_allocator")

    def __init__(self, mem: MemoryMap, first_frame: int, nframes: int, kind: MetaKind, from_allocator: bool = False):
        self._mem = mem
        self.first_frame = first_frame
        self.nframes = nframes
        self.kind = kind
        self.addr = first_frame * mem.frame_size
        self.span = nframes * mem.frame_size
        self._untyped = kind.untyped
        self._live = True
        # frames came from the injected allocator and go back to it on the last drop
        self.from_allocator = from_allocator

    def __repr__(self):
        state = "" if self._live else ", dropped"
        return f"{type(self).__name__}(frame={self.first_frame}, n={self.nframes}, kind={self.kind.name}{state})"

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self._live:
            self.drop()

    @property
    def mem(self) -> MemoryMap:
        return self._mem

    @property
    def is_untyped(self) -> bool:
        return self._untyped

    @property
    def is_live(self) -> bool:
        return self._live

    @property
    def frames(self) -> range:
        return range(self.first_frame, self.first_frame + self.nframes)

    def payload(self, i: int = 0) -> bytes:
        tag = self._mem.meta_read(self.first_frame + i).meta_tag
        return tag.payload if tag is not None else b""

    def _require_live(self):
        if not self._live:
            if self._mem.tracer is not None:
                self._mem.tracer.use_after_release(self.first_frame)
            raise StaleHandle(f"{self!r} used after drop")

    # -- counting ------------------------------------------------------------

    def dup(self) -> "Segment":
        """Another handle to the same frames; bumps each reference count."""
        self._require_live()
        mem = self._mem
        for f in self.frames:
            while True:
                cur = mem._peek(f)
                if mem.meta_transition(f, cur, FrameMeta(cur.ref_count + 1, cur.state, cur.meta_tag)):
                    break
        twin = object.__new__(type(self))
        for name in Segment.__slots__:
            setattr(twin, name, getattr(self, name))
        return twin

    def drop(self) -> None:
        """Release this handle. The last drop frees the frames."""
        self._require_live()
        self._live = False
        mem = self._mem
        released = 0
        for f in self.frames:
            while True:
                cur = mem._peek(f)
                new = FRESH if cur.ref_count == 1 else FrameMeta(cur.ref_count - 1, cur.state, cur.meta_tag)
                if mem.meta_transition(f, cur, new):
                    released += new is FRESH
                    break
        if released and self.from_allocator and mem.release_hook is not None:
            mem.release_hook(self.addr, self.span)

    # -- untyped access ------------------------------------------------------

    def _require_untyped(self):
        self._require_live()
        if not self._untyped:
            raise TypedAccessRejected(f"{self!r} is typed memory")

    def read_bytes(self, offset: int, n: int) -> bytes:
        """Copy ``n`` bytes out, starting ``offset`` bytes into the handle."""
        if not self._live or not self._untyped:
            self._require_untyped()
        end = offset + n
        if CHECKS.enabled and (offset < 0 or n < 0 or end > self.span):
            raise OutOfBounds(f"[{offset}, {offset}+{n}) outside span {self.span}")
        base = self.addr
        mem = self._mem
        if mem.tracer is not None:
            mem.tracer.byte_read(base + offset, base + end)
        return bytes(mem.store[base + offset:base + end])

    def write_bytes(self, offset: int, data) -> None:
        """Copy ``data`` in, starting ``offset`` bytes into the handle."""
        if not self._live or not self._untyped:
            self._require_untyped()
        end = offset + len(data)
        if CHECKS.enabled and (offset < 0 or end > self.span):
            raise OutOfBounds(f"[{offset}, {end}) outside span {self.span}")
        base = self.addr
        mem = self._mem
        if mem.tracer is not None:
            mem.tracer.byte_write(base + offset, base + end)
        mem.store[base + offset:base + end] = data

    def read_pod(self, offset: int, pod: Pod):
        if offset % pod.align:
            raise Misaligned(f"offset {offset} not aligned to {pod.align} for {pod.name}")
        return pod.decode(self.read_bytes(offset, pod.size))

    def write_pod(self, offset: int, pod: Pod, value) -> None:
        if offset % pod.align:
            raise Misaligned(f"offset {offset} not aligned to {pod.align} for {pod.name}")
        self.write_bytes(offset, pod.encode(value))


class Frame(Segment):
    """A handle to exactly one frame."""

    __slots__ = ()


def _payload_list(kind: MetaKind, metas: Payloads, n: int) -> list[Optional[bytes]]:
    if metas is None or isinstance(metas, (bytes, bytearray)):
        items = [metas] * n
    else:
        items = list(metas)
        if len(items) != n:
            raise ValueError(f"expected {n} metadata payloads, got {len(items)}")
    for p in items:
        if p is not None and len(p) > kind.payload_size:
            raise ValueError(f"payload of {len(p)} bytes exceeds {kind.name!r} size {kind.payload_size}")
    return items


def segment_from_unused(
    mem: MemoryMap,
    addr: int,
    nframes: int,
    meta_kind: str = "anon",
    metas: Payloads = None,
    *,
    _from_allocator: bool = False,
) -> Segment:
    """Claim ``nframes`` currently-unused frames starting at ``addr``.

    All or nothing: if any frame is in use, frames already claimed by this
    call are released again before :class:`InUse` propagates.
    """
    kind = mem.kind(meta_kind)
    payloads = _payload_list(kind, metas, nframes)
    state = kind.state()
    first = mem.frame_of(addr)
    cls = Frame if nframes == 1 else Segment
    if not CHECKS.enabled:
        for i in range(nframes):
            mem._force(first + i, FrameMeta(1, state, MetaTag(kind.name, payloads[i] or b"")))
        return cls(mem, first, nframes, kind, _from_allocator)

    if addr % mem.frame_size:
        raise Unaligned(f"address {addr:#x} not frame aligned")
    if nframes <= 0:
        raise OutOfRange("empty segment")
    if not mem.all_usable(first, nframes):
        bad = next(f for f in range(first, first + nframes) if not mem.is_usable(f))
        raise OutOfRange(f"frame {bad} is not usable memory")
    if nframes == 1:
        new = FrameMeta(1, state, MetaTag(kind.name, payloads[0] or b""))
        if not mem.meta_transition(first, FRESH, new):
            raise InUse(f"frame {first} is in use")
        return Frame(mem, first, 1, kind, _from_allocator)
    claimed = []
    for i in range(nframes):
        f = first + i
        new = FrameMeta(1, state, MetaTag(kind.name, payloads[i] or b""))
        if not mem.meta_transition(f, FRESH, new):
            for g, meta in claimed:
                mem.meta_transition(g, meta, FRESH)
            raise InUse(f"frame {f} is in use")
        claimed.append((f, new))
    return cls(mem, first, nframes, kind, _from_allocator)


def frame_from_unused(mem: MemoryMap, addr: int, meta_kind: str = "anon", initial_meta: Optional[bytes] = None) -> Frame:
    """Claim the single unused frame at ``addr``."""
    return segment_from_unused(mem, addr, 1, meta_kind, initial_meta)
