"""The interface available to de-privileged services.

Everything here is safe to call: invalid use fails with an exception rather
than corrupting framework state. Services import from this module only.
"""

from . import errors as _errors
from .errors import *  # noqa: F401,F403
from .frame import Frame, Segment, frame_from_unused, segment_from_unused
from .frame_alloc import AllocLayout, alloc_frames, register_frame_allocator
from .frame_alloc.buddy import BuddyAllocator
from .machine import Machine
from .mem import FRAME_SIZE
from .pod import ALL as POD_TYPES
from .pod import Pod
from .privsep import (
    Direction, DmaMapping, DmaMode, DmaStatus, ExitTrap, IoMem, IoPort, IrqLine, KernelStack, Load,
    PageFaultTrap, SetReg, Space, Store, Syscall, SyscallTrap, Trap, UserContext, UserExit, VmSpace,
    usermode_run,
)
from .sched import Event, Exit, Run, RunQueue, Scheduler, Sleep, Task, Yield
from .sched.policies import RoundRobin, Vruntime
from .slab import HeapObject, HeapSlot, Slab, TypeTag
from .slab.heap import DEFAULT_CLASSES, GlobalHeap, SlabCache, global_heap_register, heap_alloc

__all__ = [n for n in vars(_errors) if isinstance(getattr(_errors, n), type)] + [
    "AllocLayout", "BuddyAllocator", "DEFAULT_CLASSES", "Direction", "DmaMapping", "DmaMode", "DmaStatus",
    "Event", "Exit", "ExitTrap", "FRAME_SIZE", "Frame", "GlobalHeap", "HeapObject", "HeapSlot", "IoMem",
    "IoPort", "IrqLine", "KernelStack", "Load", "Machine", "POD_TYPES", "PageFaultTrap", "Pod", "RoundRobin",
    "Run", "RunQueue", "Scheduler", "Segment", "SetReg", "Sleep", "Slab", "SlabCache", "Space", "Store",
    "Syscall", "SyscallTrap", "Task", "Trap", "TypeTag", "UserContext", "UserExit", "VmSpace", "Vruntime",
    "Yield", "alloc_frames", "frame_from_unused", "global_heap_register", "heap_alloc",
    "register_frame_allocator", "segment_from_unused", "usermode_run",
]
