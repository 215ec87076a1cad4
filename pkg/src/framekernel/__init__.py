"""A simulated framekernel.

A small privileged framework owns memory metadata, context switching, user
mode, DMA, I/O and interrupts, and exposes a checked interface
(:mod:`framekernel.api`). Allocators, schedulers, drivers and system calls
are ordinary de-privileged code built on that interface.
"""

from ._checks import checks_disabled
from .errors import Fault, FrameworkError
from .machine import Machine, MachineConfig
from .mem import FRAME_SIZE, MemoryMap

__version__ = "0.1.0"

__all__ = ["FRAME_SIZE", "Fault", "FrameworkError", "Machine", "MachineConfig", "MemoryMap", "checks_disabled"]
