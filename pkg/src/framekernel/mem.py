"""Simulated physical memory.

A :class:`MemoryMap` is a zero-filled byte store cut into fixed-size frames,
plus a metadata array with one :class:`FrameMeta` per frame. Everything that
claims memory elsewhere in the package goes through :meth:`MemoryMap.meta_transition`,
a compare-and-exchange on one frame's metadata.

Multi-byte values are stored little-endian regardless of the host.
"""

from __future__ import annotations

import enum
import struct
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .errors import (
    OutOfBounds,
    OverlappingRegions,
    RegistrationClosed,
    SaturationFault,
    SnapshotError,
    UnalignedRegion,
    UnknownMetaKind,
)

FRAME_SIZE = 4096
DEFAULT_FRAME_COUNT = 4096
REF_COUNT_MAX = 0xFFFF_FFFF
# bytes per metadata entry when the metadata array is made resident in the store
META_ENTRY_SIZE = 64

SNAPSHOT_MAGIC = b"FKMM"
SNAPSHOT_VERSION = 1


class Variant(enum.IntEnum):
    UNUSED = 0
    TYPED = 1
    UNTYPED = 2


class TypedKind(enum.IntEnum):
    """Privileged uses of typed memory."""

    PAGE_TABLE = 1
    KERNEL_STACK = 2
    SLAB = 3
    METADATA = 4


@dataclass(frozen=True)
class FrameState:
    variant: Variant
    # TypedKind for typed frames, the metadata kind name for untyped ones
    tag: object = None

    @classmethod
    def typed(cls, kind: TypedKind) -> "FrameState":
        return _intern(cls(Variant.TYPED, TypedKind(kind)))

    @classmethod
    def untyped(cls, kind_name: str) -> "FrameState":
        return _intern(cls(Variant.UNTYPED, kind_name))

    @property
    def is_unused(self) -> bool:
        return self.variant is Variant.UNUSED

    @property
    def is_typed(self) -> bool:
        return self.variant is Variant.TYPED

    @property
    def is_untyped(self) -> bool:
        return self.variant is Variant.UNTYPED

    def __repr__(self):
        if self.variant is Variant.UNUSED:
            return "Unused"
        if self.variant is Variant.TYPED:
            return f"Typed({self.tag.name})"
        return f"Untyped({self.tag})"


UNUSED = FrameState(Variant.UNUSED)
_UNUSED_V = Variant.UNUSED
# canonical instances, so equal states are usually also identical
_STATES: dict[FrameState, FrameState] = {UNUSED: UNUSED}


def _intern(state: FrameState) -> FrameState:
    return _STATES.setdefault(state, state)


@dataclass(frozen=True)
class MetaTag:
    """The customizable per-frame metadata slot: a registered kind plus payload."""

    kind: str
    payload: bytes = b""


@dataclass(frozen=True)
class FrameMeta:
    ref_count: int
    state: FrameState
    meta_tag: Optional[MetaTag] = None


FRESH = FrameMeta(0, UNUSED, None)


@dataclass(frozen=True)
class MetaKind:
    name: str
    payload_size: int = 0
    untyped: bool = False
    typed_as: Optional[TypedKind] = None

    def __post_init__(self):
        state = FrameState.untyped(self.name) if self.untyped else FrameState.typed(self.typed_as)
        object.__setattr__(self, "_state", state)

    def state(self) -> FrameState:
        return self._state


BUILTIN_KINDS = (
    MetaKind("page_table", typed_as=TypedKind.PAGE_TABLE),
    MetaKind("kernel_stack", typed_as=TypedKind.KERNEL_STACK),
    MetaKind("slab", 16, typed_as=TypedKind.SLAB),
    MetaKind("metadata", typed_as=TypedKind.METADATA),
    MetaKind("anon", 0, untyped=True),
)


def _check_regions(frame_size: int, total: int, usable) -> list[tuple[int, int]]:
    regions = []
    for addr, length in usable:
        addr, length = int(addr), int(length)
        if addr < 0 or length <= 0 or addr + length > total:
            raise OutOfBounds(f"region ({addr:#x}, {length:#x}) outside memory of {total:#x} bytes")
        if addr % frame_size or length % frame_size:
            raise UnalignedRegion(f"region ({addr:#x}, {length:#x}) not frame aligned")
        regions.append((addr, length))
    ordered = sorted(regions)
    for (a0, l0), (a1, _) in zip(ordered, ordered[1:]):
        if a0 + l0 > a1:
            raise OverlappingRegions(f"regions at {a0:#x} and {a1:#x} overlap")
    return regions


class MemoryMap:
    """Byte store, metadata array and usable-region bookkeeping.

    Args:
        frame_size: Bytes per frame, a power of two no smaller than 256.
        frame_count: Number of frames.
        usable: ``(addr, length)`` regions handed to allocators. Defaults to
            all of memory.
        reserve_metadata: Make the metadata array resident in the store by
            claiming enough low frames as ``Typed(METADATA)``. Those frames
            are removed from the usable regions.
    """

    def __init__(
        self,
        frame_size: int = FRAME_SIZE,
        frame_count: int = DEFAULT_FRAME_COUNT,
        usable: Optional[Iterable[tuple[int, int]]] = None,
        *,
        reserve_metadata: bool = False,
    ):
        if frame_size < 256 or frame_size & (frame_size - 1):
            raise ValueError(f"frame_size must be a power of two >= 256, got {frame_size}")
        if frame_count <= 0:
            raise ValueError("frame_count must be positive")
        self.frame_size = frame_size
        self.frame_count = frame_count
        self.size = frame_size * frame_count
        self._shift = frame_size.bit_length() - 1
        if usable is None:
            usable = [(0, self.size)]
        self.usable = _check_regions(frame_size, self.size, usable)

        self.store = bytearray(self.size)
        self._refs = [0] * frame_count
        self._states = [UNUSED] * frame_count
        self._tags: list[Optional[MetaTag]] = [None] * frame_count
        self._lock = threading.Lock()

        self._usable_frames = bytearray(frame_count)
        for addr, length in self.usable:
            first = addr >> self._shift
            self._usable_frames[first:first + (length >> self._shift)] = b"\x01" * (length >> self._shift)

        self.kinds: dict[str, MetaKind] = {}
        for kind in BUILTIN_KINDS:
            self.kinds[kind.name] = kind
        self.ever_claimed = False

        # hooks installed by other subsystems
        self.tracer = None
        self.release_hook: Optional[Callable[[int, int], None]] = None
        self.alloc_slot = None
        # fault injection: metadata updates become a plain read followed by a plain write
        self.unsynchronized_meta = False
        # fault injection: slab memory is announced to the tracer as read-only
        self.readonly_heap_exposure = False
        self.heap = None
        # start -> end of kernel-stack guard frames
        self.guard_regions: dict[int, int] = {}

        self.reserved_frames = 0
        if reserve_metadata:
            self._reserve_metadata()

    # -- bookkeeping ---------------------------------------------------------

    def _reserve_metadata(self) -> None:
        n = -(-self.frame_count * META_ENTRY_SIZE // self.frame_size)
        state = FrameState.typed(TypedKind.METADATA)
        tag = MetaTag("metadata")
        for f in range(n):
            self._refs[f] = 1
            self._states[f] = state
            self._tags[f] = tag
            self._usable_frames[f] = 0
        limit = n * self.frame_size
        trimmed = []
        for addr, length in self.usable:
            end = addr + length
            addr = max(addr, limit)
            if addr < end:
                trimmed.append((addr, end - addr))
        self.usable = trimmed
        self.reserved_frames = n

    def register_meta_kind(
        self,
        name: str,
        payload_size: int = 0,
        *,
        untyped: bool = True,
        typed_as: Optional[TypedKind] = None,
    ) -> MetaKind:
        """Register a metadata kind. Only allowed before the first frame claim."""
        if self.ever_claimed:
            raise RegistrationClosed(f"cannot register {name!r} after frames were claimed")
        if name in self.kinds:
            raise ValueError(f"metadata kind {name!r} already registered")
        if not untyped and typed_as is None:
            raise ValueError("typed kinds need a TypedKind")
        kind = MetaKind(name, payload_size, untyped, None if untyped else TypedKind(typed_as))
        self.kinds[name] = kind
        return kind

    def kind(self, name: str) -> MetaKind:
        try:
            return self.kinds[name]
        except KeyError:
            raise UnknownMetaKind(name) from None

    def frame_of(self, addr: int) -> int:
        return addr >> self._shift

    def addr_of(self, frame: int) -> int:
        return frame << self._shift

    def is_usable(self, frame: int) -> bool:
        return 0 <= frame < self.frame_count and bool(self._usable_frames[frame])

    def all_usable(self, first: int, n: int) -> bool:
        """True if frames ``first .. first+n-1`` all lie in usable regions."""
        end = first + n
        if first < 0 or end > self.frame_count:
            return False
        if n == 1:
            return bool(self._usable_frames[first])
        return 0 not in self._usable_frames[first:end]

    @property
    def usable_bytes(self) -> int:
        return sum(length for _, length in self.usable)

    # -- metadata ------------------------------------------------------------

    def _check_frame(self, frame: int) -> None:
        if not 0 <= frame < self.frame_count:
            raise OutOfBounds(f"frame {frame} not in [0, {self.frame_count})")

    def meta_read(self, frame: int) -> FrameMeta:
        """Consistent snapshot of one frame's metadata."""
        self._check_frame(frame)
        if self.tracer is not None:
            self.tracer.meta_read(frame)
        with self._lock:
            return FrameMeta(self._refs[frame], self._states[frame], self._tags[frame])

    def meta_transition(self, frame: int, expected: FrameMeta, new: FrameMeta) -> bool:
        """Install ``new`` iff the current metadata equals ``expected``.

        Returns False (a conflict) and changes nothing otherwise.
        """
        if not 0 <= frame < self.frame_count:
            raise OutOfBounds(f"frame {frame} not in [0, {self.frame_count})")
        refs = new.ref_count
        if refs > REF_COUNT_MAX:
            raise SaturationFault(f"frame {frame}: reference count overflow")
        if refs < 0 or (refs > 0) == (new.state.variant is _UNUSED_V):
            raise ValueError(f"inconsistent metadata {new}")
        if self.unsynchronized_meta:
            return self._racy_transition(frame, expected, new)
        tracer = self.tracer
        if tracer is not None:
            tracer.meta_cas(frame)
        with self._lock:
            state, tag = self._states[frame], self._tags[frame]
            if (
                self._refs[frame] != expected.ref_count
                or (state is not expected.state and state != expected.state)
                or (tag is not expected.meta_tag and tag != expected.meta_tag)
            ):
                return False
            self._refs[frame] = refs
            self._states[frame] = new.state
            self._tags[frame] = new.meta_tag
            if refs and not expected.ref_count:
                self.ever_claimed = True
            return True

    def _racy_transition(self, frame, expected, new) -> bool:
        # no lock: a separate load and store, racing with concurrent drop/from_unused
        tracer = self.tracer
        if tracer is not None:
            tracer.meta_read(frame)
        current = FrameMeta(self._refs[frame], self._states[frame], self._tags[frame])
        if current != expected:
            return False
        if tracer is not None:
            tracer.meta_write(frame)
        self._refs[frame] = new.ref_count
        self._states[frame] = new.state
        self._tags[frame] = new.meta_tag
        if expected.state.is_unused and not new.state.is_unused:
            self.ever_claimed = True
        return True

    def _peek(self, frame: int) -> FrameMeta:
        # untraced, unlocked read; only used to form the expected value of a CAS
        return FrameMeta(self._refs[frame], self._states[frame], self._tags[frame])

    def _force(self, frame: int, new: FrameMeta) -> None:
        # unchecked store used by bench mode in place of a validated claim
        with self._lock:
            self._refs[frame] = new.ref_count
            self._states[frame] = new.state
            self._tags[frame] = new.meta_tag
            self.ever_claimed = True

    def census(self) -> int:
        """Sum of all reference counts."""
        with self._lock:
            return sum(self._refs)

    def ref_counts(self) -> list[int]:
        with self._lock:
            return list(self._refs)

    def unused_frames(self) -> set[int]:
        with self._lock:
            return {f for f, s in enumerate(self._states) if s.is_unused}

    # -- raw bytes (privileged) ----------------------------------------------

    def phys_read(self, addr: int, n: int) -> bytes:
        if self.tracer is not None:
            self.tracer.byte_read(addr, addr + n)
        return bytes(self.store[addr:addr + n])

    def phys_write(self, addr: int, data: bytes) -> None:
        if self.tracer is not None:
            self.tracer.byte_write(addr, addr + len(data))
        self.store[addr:addr + len(data)] = data

    def phys_fill(self, addr: int, n: int, value: int = 0) -> None:
        if self.tracer is not None:
            self.tracer.byte_write(addr, addr + n)
        self.store[addr:addr + n] = bytes([value]) * n

    # -- snapshots -----------------------------------------------------------

    def dump(self) -> bytes:
        """Serialize metadata and store into the FKMM snapshot format."""
        out = [struct.pack("<4sHII", SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self.frame_size, self.frame_count)]
        names = list(self.kinds)
        index = {name: i + 1 for i, name in enumerate(names)}
        out.append(struct.pack("<H", len(names)))
        for name in names:
            k = self.kinds[name]
            raw = name.encode()
            out.append(struct.pack("<B", len(raw)) + raw)
            out.append(struct.pack("<HBB", k.payload_size, int(k.untyped), int(k.typed_as or 0)))
        out.append(struct.pack("<BI", int(self.ever_claimed), len(self.usable)))
        for addr, length in self.usable:
            out.append(struct.pack("<QQ", addr, length))
        with self._lock:
            for f in range(self.frame_count):
                state, tag = self._states[f], self._tags[f]
                if state.is_typed:
                    state_tag = int(state.tag)
                elif state.is_untyped:
                    state_tag = index[state.tag]
                else:
                    state_tag = 0
                payload = tag.payload if tag is not None else b""
                out.append(struct.pack(
                    "<IBHHH", self._refs[f], int(state.variant), state_tag,
                    index[tag.kind] if tag is not None else 0, len(payload),
                ))
                out.append(payload)
            out.append(bytes(self.store))
        return b"".join(out)

    @classmethod
    def load(cls, blob: bytes) -> "MemoryMap":
        """Rebuild a map from :meth:`dump` output."""
        try:
            return cls._load(memoryview(blob))
        except struct.error as exc:
            raise SnapshotError(f"truncated snapshot: {exc}") from None

    @classmethod
    def _load(cls, view: memoryview) -> "MemoryMap":
        magic, version, frame_size, frame_count = struct.unpack_from("<4sHII", view, 0)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError("bad magic")
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported version {version}")
        pos = 14
        (nkinds,) = struct.unpack_from("<H", view, pos)
        pos += 2
        kinds = []
        for _ in range(nkinds):
            (ln,) = struct.unpack_from("<B", view, pos)
            name = bytes(view[pos + 1:pos + 1 + ln]).decode()
            pos += 1 + ln
            payload_size, untyped, typed_as = struct.unpack_from("<HBB", view, pos)
            pos += 4
            kinds.append(MetaKind(name, payload_size, bool(untyped), TypedKind(typed_as) if typed_as else None))
        ever_claimed, nregions = struct.unpack_from("<BI", view, pos)
        pos += 5
        usable = []
        for _ in range(nregions):
            usable.append(struct.unpack_from("<QQ", view, pos))
            pos += 16
        mem = cls(frame_size, frame_count, usable)
        mem.kinds = {k.name: k for k in kinds}
        names = [k.name for k in kinds]
        for f in range(frame_count):
            ref, variant, state_tag, tag_kind, plen = struct.unpack_from("<IBHHH", view, pos)
            pos += 11
            payload = bytes(view[pos:pos + plen])
            pos += plen
            variant = Variant(variant)
            if variant is Variant.TYPED:
                state = FrameState.typed(TypedKind(state_tag))
            elif variant is Variant.UNTYPED:
                state = FrameState.untyped(names[state_tag - 1])
            else:
                state = UNUSED
            mem._refs[f] = ref
            mem._states[f] = state
            mem._tags[f] = MetaTag(names[tag_kind - 1], payload) if tag_kind else None
        if len(view) - pos != mem.size:
            raise SnapshotError(f"store length {len(view) - pos} != {mem.size}")
        mem.store[:] = view[pos:]
        mem.ever_claimed = bool(ever_claimed)
        return mem


@dataclass(frozen=True)
class FrameDelta:
    frame: int
    before: FrameMeta
    after: FrameMeta
    bytes_changed: int

    def __str__(self):
        def show(m: FrameMeta) -> str:
            return f"refs={m.ref_count} {m.state!r}" + (f" {m.meta_tag.kind}" if m.meta_tag else "")
        return f"frame {self.frame}: {show(self.before)} -> {show(self.after)}, {self.bytes_changed} byte(s) changed"


def diff(a: MemoryMap, b: MemoryMap) -> list[FrameDelta]:
    """Frame-level differences between two maps of identical geometry."""
    if (a.frame_size, a.frame_count) != (b.frame_size, b.frame_count):
        raise SnapshotError("geometry mismatch")
    fs = a.frame_size
    deltas = []
    for f in range(a.frame_count):
        ma = FrameMeta(a._refs[f], a._states[f], a._tags[f])
        mb = FrameMeta(b._refs[f], b._states[f], b._tags[f])
        lo = f * fs
        sa, sb = a.store[lo:lo + fs], b.store[lo:lo + fs]
        changed = 0 if sa == sb else sum(x != y for x, y in zip(sa, sb))
        if ma != mb or changed:
            deltas.append(FrameDelta(f, ma, mb, changed))
    return deltas
