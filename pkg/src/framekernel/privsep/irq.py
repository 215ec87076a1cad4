"""Interrupt lines and the device interrupt remapping table."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import OutOfRange, VectorBusy

log = logging.getLogger(__name__)

NUM_VECTORS = 256
FIRST_DEVICE_VECTOR = 32


@dataclass
class IrqLine:
    controller: "IrqController"
    vector: int
    handler: Callable[[int], None]
    live: bool = True

    def release(self) -> None:
        self.controller._release(self)


@dataclass
class IrqController:
    delivered: list[tuple[str, int]] = field(default_factory=list)
    dropped: list[tuple[str, int, str]] = field(default_factory=list)

    def __post_init__(self):
        self._lines: dict[int, IrqLine] = {}
        self._auth: set[tuple[str, int]] = set()
        self._lock = threading.Lock()

    def authorize(self, device: str, vector: int) -> None:
        """Add a remapping entry letting ``device`` raise ``vector``."""
        if not FIRST_DEVICE_VECTOR <= vector < NUM_VECTORS:
            raise OutOfRange(f"vector {vector} is reserved for the CPU")
        self._auth.add((device, vector))

    def register(self, vector: int, handler: Callable[[int], None]) -> IrqLine:
        if not FIRST_DEVICE_VECTOR <= vector < NUM_VECTORS:
            raise OutOfRange(f"vector {vector} outside [{FIRST_DEVICE_VECTOR}, {NUM_VECTORS})")
        with self._lock:
            if vector in self._lines:
                raise VectorBusy(f"vector {vector} already has a handler")
            line = IrqLine(self, vector, handler)
            self._lines[vector] = line
            return line

    def _release(self, line: IrqLine) -> None:
        with self._lock:
            if self._lines.get(line.vector) is line:
                del self._lines[line.vector]
            line.live = False

    def device_raise(self, device: str, vector: int) -> bool:
        """Deliver if ``device`` may raise ``vector`` and a handler is registered."""
        reason: Optional[str] = None
        with self._lock:
            line = self._lines.get(vector)
            if (device, vector) not in self._auth:
                reason = "unauthorized"
            elif line is None:
                reason = "no handler"
        if reason is not None:
            self.dropped.append((device, vector, reason))
            log.info("dropped irq %d from %s: %s", vector, device, reason)
            return False
        self.delivered.append((device, vector))
        line.handler(vector)
        return True
