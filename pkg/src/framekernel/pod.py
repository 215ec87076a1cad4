"""Plain-old-data codecs: value types valid under every bit pattern."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Pod:
    name: str
    size: int
    align: int
    fmt: str = field(repr=False)

    def encode(self, value) -> bytes:
        return struct.pack(self.fmt, value)

    def decode(self, raw: bytes):
        return struct.unpack(self.fmt, raw)[0]


U8 = Pod("u8", 1, 1, "<B")
U16 = Pod("u16", 2, 2, "<H")
U32 = Pod("u32", 4, 4, "<I")
U64 = Pod("u64", 8, 8, "<Q")
I8 = Pod("i8", 1, 1, "<b")
I16 = Pod("i16", 2, 2, "<h")
I32 = Pod("i32", 4, 4, "<i")
I64 = Pod("i64", 8, 8, "<q")

ALL = (U8, U16, U32, U64, I8, I16, I32, I64)


def raw(n: int, align: int = 1) -> Pod:
    """An ``n``-byte blob; the identity codec over bytes."""
    return Pod(f"[u8; {n}]", n, align, f"<{n}s")
