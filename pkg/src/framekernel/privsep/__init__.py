"""Privilege separation: user mode, address spaces, stacks, DMA, I/O and IRQs."""

from .context import (
    GPRS, INITIAL_RFLAGS, SENSITIVE_MASK, ExitTrap, Load, PageFaultTrap, SetReg, Store, Syscall,
    SyscallTrap, Trap, UserContext, UserExit, usermode_run,
)
from .dma import Direction, DmaMapping, DmaMode, DmaStatus, Iommu
from .io import (
    IoBus, IoManager, IoMem, IoPort, RegisterFile, Sensitivity, SensitivityRegistry, Space,
)
from .irq import FIRST_DEVICE_VECTOR, IrqController, IrqLine
from .stack import KernelStack
from .vm import Mapping, VmSpace

__all__ = [
    "Direction", "DmaMapping", "DmaMode", "DmaStatus", "ExitTrap", "FIRST_DEVICE_VECTOR", "GPRS",
    "INITIAL_RFLAGS", "IoBus", "IoManager", "IoMem", "IoPort", "Iommu", "IrqController", "IrqLine",
    "KernelStack", "Load", "Mapping", "PageFaultTrap", "RegisterFile", "SENSITIVE_MASK", "Sensitivity",
    "SensitivityRegistry", "SetReg", "Space", "Store", "Syscall", "SyscallTrap", "Trap", "UserContext",
    "UserExit", "VmSpace", "usermode_run",
]
