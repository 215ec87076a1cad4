"""An echo device model and its driver.

The device copies a request from its data registers into memory by DMA. The
driver programs it through an acquired MMIO window and reads the answer from
its DMA buffer.
"""

from __future__ import annotations

from typing import Optional

from ..api import (
    AllocLayout, DeviceTimeout, Direction, DmaMode, DmaStatus, Machine, Space, alloc_frames,
)

REG_DMA_ADDR = 0x00
REG_LEN = 0x08
REG_CMD = 0x0C
REG_STATUS = 0x10
REG_DATA = 0x40
DATA_SIZE = 0x40
WINDOW_SIZE = 0x100

CMD_ECHO = 1
STATUS_IDLE, STATUS_BUSY, STATUS_DONE, STATUS_ERROR = 0, 1, 2, 3

DEFAULT_BUDGET = 1000


class EchoDevice:
    def __init__(self, name: str = "echo0", latency: int = 3, vector: Optional[int] = None):
        self.name = name
        self.latency = latency
        self.vector = vector
        self.regs = bytearray(WINDOW_SIZE)
        self.board = None
        self._countdown = 0
        self._job: Optional[tuple[int, bytes]] = None
        self.blocked = 0

    def connect(self, board) -> None:
        self.board = board

    def _reg(self, off: int, width: int) -> int:
        return int.from_bytes(self.regs[off:off + width], "little")

    def _set(self, off: int, width: int, value: int) -> None:
        self.regs[off:off + width] = value.to_bytes(width, "little")

    def io_read(self, offset: int, width: int) -> int:
        return self._reg(offset, width)

    def io_write(self, offset: int, width: int, value: int) -> None:
        if offset == REG_CMD:
            if value == CMD_ECHO:
                self._start()
            return
        if offset == REG_STATUS:
            return  # read-only
        self._set(offset, width, value)

    def _start(self) -> None:
        n = self._reg(REG_LEN, 4)
        if n > DATA_SIZE:
            self._set(REG_STATUS, 4, STATUS_ERROR)
            return
        payload = bytes(self.regs[REG_DATA:REG_DATA + n])
        self._job = (self._reg(REG_DMA_ADDR, 8), payload)
        self._countdown = self.latency
        self._set(REG_STATUS, 4, STATUS_BUSY)

    def step(self) -> None:
        if self._job is None:
            return
        self._countdown -= 1
        if self._countdown > 0:
            return
        iova, payload = self._job
        if self.board.device_dma_write(self.name, iova, payload) is not DmaStatus.OK:
            # stuck retrying, as real hardware would be
            self.blocked += 1
            return
        self._job = None
        self._set(REG_STATUS, 4, STATUS_DONE)
        if self.vector is not None:
            self.board.device_raise(self.name, self.vector)


class EchoDriver:
    """Driver for one :class:`EchoDevice`.

    Args:
        machine: The platform.
        mmio: Base of the device's register window.
        buffer_frames: Size of the DMA buffer.
        map_dma: Set False to leave the buffer unmapped (requests then time out).
        vector: Wait for the completion interrupt instead of only polling.
    """

    def __init__(self, machine: Machine, mmio: int, buffer_frames: int = 1, map_dma: bool = True,
                 vector: Optional[int] = None):
        self.machine = machine
        self.regs = machine.io.acquire_mem(mmio, mmio + WINDOW_SIZE)
        mem = machine.mem
        self.buffer = alloc_frames(mem, AllocLayout.frames(buffer_frames, mem.frame_size))
        self.dma = machine.iommu.map(self.buffer, DmaMode.COHERENT, Direction.FROM_DEVICE) if map_dma else None
        self.completions = 0
        self.line = machine.irq.register(vector, self._on_irq) if vector is not None else None

    def _on_irq(self, vector: int) -> None:
        self.completions += 1

    def request(self, data: bytes, offset: int = 0, budget: int = DEFAULT_BUDGET) -> bytes:
        """Send ``data`` and return the device's echo, read from the DMA buffer at ``offset``."""
        if len(data) > DATA_SIZE:
            raise ValueError(f"request of {len(data)} bytes exceeds {DATA_SIZE}")
        if not 0 <= offset <= self.buffer.span - len(data):
            raise ValueError(f"offset {offset} does not fit the buffer")
        padded = data + b"\0" * (-len(data) % 4)
        for i in range(0, len(padded), 4):
            self.regs.write_once(REG_DATA + i, int.from_bytes(padded[i:i + 4], "little"), 4)
        base = self.dma.iova if self.dma is not None else 0
        self.regs.write_once(REG_DMA_ADDR, base + offset, 8)
        self.regs.write_once(REG_LEN, len(data), 4)
        self.regs.write_once(REG_CMD, CMD_ECHO, 4)
        for _ in range(budget):
            self.machine.cpu_relax()
            status = self.regs.read_once(REG_STATUS, 4)
            if status == STATUS_DONE:
                return self.buffer.read_bytes(offset, len(data))
            if status == STATUS_ERROR:
                raise DeviceTimeout("device reported an error")
        raise DeviceTimeout(f"no completion within {budget} steps")

    def close(self) -> None:
        if self.line is not None:
            self.line.release()
        if self.dma is not None:
            self.dma.unmap()
        self.buffer.drop()
        self.regs.release()


def plug_echo(machine: Machine, name: str = "echo0", mmio: int = 0xFEB0_0000, vector: Optional[int] = None,
              latency: int = 3) -> EchoDevice:
    dev = EchoDevice(name, latency, vector)
    machine.plug(dev, Space.MEM, mmio, mmio + WINDOW_SIZE, [vector] if vector is not None else [])
    return dev


def demo_driver_request(driver: EchoDriver, request: bytes) -> bytes:
    return driver.request(request)
