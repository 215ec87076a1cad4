"""Boot-time assembly of the simulated platform.

A :class:`Machine` owns the memory map, the CPUs, the IOMMU, the I/O bus
with its sensitivity labels and the interrupt controller. Device models are
plugged in here, before the labels are sealed; afterwards services only see
the checked interfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .mem import DEFAULT_FRAME_COUNT, FRAME_SIZE, MemoryMap
from .privsep import DmaStatus, IoBus, IoManager, Iommu, IrqController, Sensitivity, SensitivityRegistry, Space
from .sched import Sched

# platform defaults: one insensitive device window and serial ports, with
# interrupt-controller and PCI-config ranges kept sensitive
DEFAULT_LABELS = (
    (Space.MEM, 0xFEB0_0000, 0xFEB1_0000, Sensitivity.INSENSITIVE),
    (Space.MEM, 0xFEC0_0000, 0xFEF0_0000, Sensitivity.SENSITIVE),
    (Space.PORT, 0x3F8, 0x400, Sensitivity.INSENSITIVE),
    (Space.PORT, 0xCF8, 0xD00, Sensitivity.SENSITIVE),
)


class DeviceModel(Protocol):
    name: str

    def connect(self, board: "Machine") -> None: ...

    def step(self) -> None: ...

    def io_read(self, offset: int, width: int) -> int: ...

    def io_write(self, offset: int, width: int, value: int) -> None: ...


@dataclass
class MachineConfig:
    frame_size: int = FRAME_SIZE
    frame_count: int = DEFAULT_FRAME_COUNT
    usable: Optional[Sequence[tuple[int, int]]] = None
    ncpus: int = 1
    strict_guard: bool = False
    labels: Sequence[tuple] = field(default_factory=lambda: list(DEFAULT_LABELS))


class Machine:
    def __init__(self, config: Optional[MachineConfig] = None, **overrides):
        cfg = config or MachineConfig(**overrides)
        self.config = cfg
        self.mem = MemoryMap(cfg.frame_size, cfg.frame_count, cfg.usable)
        self.sched = Sched(cfg.ncpus, strict_guard=cfg.strict_guard)
        self.iommu = Iommu(self.mem)
        self.registry = SensitivityRegistry()
        for space, lo, hi, sens in cfg.labels:
            self.registry.label(space, lo, hi, sens)
        self.bus = IoBus()
        self.io = IoManager(self.registry, self.bus)
        self.irq = IrqController()
        self.devices: list[DeviceModel] = []
        self.cycles = 0

    def plug(self, device: DeviceModel, space: Space, lo: int, hi: int, vectors: Sequence[int] = ()) -> None:
        """Attach a device model to the bus and authorize its interrupt vectors."""
        self.bus.attach(space, lo, hi, device)
        for v in vectors:
            self.irq.authorize(device.name, v)
        self.devices.append(device)
        device.connect(self)

    def seal(self) -> None:
        self.registry.seal()

    # -- time ----------------------------------------------------------------

    def cpu_relax(self, cycles: int = 1) -> None:
        """Let the hardware make progress while a driver polls."""
        for _ in range(cycles):
            self.cycles += 1
            for d in self.devices:
                d.step()

    # -- the device side of the board ----------------------------------------

    def device_dma_write(self, device: str, iova: int, data: bytes) -> DmaStatus:
        return self.iommu.device_write(device, iova, data)

    def device_dma_read(self, device: str, iova: int, n: int) -> tuple[DmaStatus, bytes]:
        return self.iommu.device_read(device, iova, n)

    def device_raise(self, device: str, vector: int) -> bool:
        return self.irq.device_raise(device, vector)
