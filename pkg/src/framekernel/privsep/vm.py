"""User address spaces. Only untyped frames can be mapped."""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass
from typing import Optional

from ..errors import NotMapped, Overlap, PermissionDenied, TypedFrameRejected, Unaligned
from ..frame import Segment
from ..mem import MemoryMap


@dataclass
class Mapping:
    vaddr: int
    npages: int
    handle: Segment
    perms: frozenset

    @property
    def end(self) -> int:
        return self.vaddr + self.handle.span


def _perms(perms) -> frozenset:
    p = frozenset(perms)
    if not p <= set("rwx"):
        raise ValueError(f"bad permissions {perms!r}")
    return p


class VmSpace:
    def __init__(self, mem: MemoryMap):
        self.mem = mem
        self.page_size = mem.frame_size
        self._starts: list[int] = []
        self._maps: list[Mapping] = []
        self._lock = threading.RLock()

    def __len__(self):
        return sum(m.npages for m in self._maps)

    def _find(self, vaddr: int) -> Optional[Mapping]:
        i = bisect.bisect_right(self._starts, vaddr) - 1
        if i >= 0 and vaddr < self._maps[i].end:
            return self._maps[i]
        return None

    def map(self, vaddr: int, handle: Segment, perms="rw") -> Mapping:
        """Map ``handle``'s frames at ``vaddr``. The mapping holds its own handle."""
        perms = _perms(perms)
        if vaddr % self.page_size or vaddr < 0:
            raise Unaligned(f"vaddr {vaddr:#x} not page aligned")
        if not handle.is_untyped:
            raise TypedFrameRejected(f"{handle!r} is typed memory")
        with self._lock:
            end = vaddr + handle.span
            i = bisect.bisect_left(self._starts, vaddr)
            if (i > 0 and self._maps[i - 1].end > vaddr) or (i < len(self._maps) and self._maps[i].vaddr < end):
                raise Overlap(f"[{vaddr:#x}, {end:#x}) overlaps an existing mapping")
            m = Mapping(vaddr, handle.nframes, handle.dup(), perms)
            self._starts.insert(i, vaddr)
            self._maps.insert(i, m)
            return m

    def unmap(self, vaddr: int) -> None:
        with self._lock:
            i = bisect.bisect_left(self._starts, vaddr)
            if i == len(self._starts) or self._starts[i] != vaddr:
                raise NotMapped(f"no mapping starts at {vaddr:#x}")
            del self._starts[i]
            m = self._maps.pop(i)
        m.handle.drop()

    def clear(self) -> None:
        with self._lock:
            maps, self._maps, self._starts = self._maps, [], []
        for m in maps:
            m.handle.drop()

    def mappings(self) -> list[Mapping]:
        return list(self._maps)

    def frames(self) -> set[int]:
        """Every physical frame reachable through this space."""
        return {f for m in self._maps for f in m.handle.frames}

    # -- copying -------------------------------------------------------------

    def _pieces(self, vaddr: int, n: int, need: str):
        pieces = []
        pos, end = vaddr, vaddr + n
        while pos < end:
            m = self._find(pos)
            if m is None:
                raise NotMapped(f"{pos:#x} not mapped")
            if need not in m.perms:
                raise PermissionDenied(f"{pos:#x} lacks '{need}' permission")
            stop = min(end, m.end)
            pieces.append((m, pos - m.vaddr, stop - pos))
            pos = stop
        return pieces

    def fault_addr(self, vaddr: int, n: int, write: bool) -> Optional[int]:
        """First address in ``[vaddr, vaddr+n)`` a user access would fault on."""
        try:
            self._pieces(vaddr, n, "w" if write else "r")
        except (NotMapped, PermissionDenied) as exc:
            return int(str(exc).split()[0], 16)
        return None

    def read_user(self, vaddr: int, n: int) -> bytes:
        with self._lock:
            pieces = self._pieces(vaddr, n, "r")
        return b"".join(m.handle.read_bytes(off, k) for m, off, k in pieces)

    def write_user(self, vaddr: int, data: bytes) -> None:
        with self._lock:
            pieces = self._pieces(vaddr, len(data), "w")
        pos = 0
        for m, off, k in pieces:
            m.handle.write_bytes(off, data[pos:pos + k])
            pos += k
