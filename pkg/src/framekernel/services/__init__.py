"""De-privileged services built on :mod:`framekernel.api` alone."""

from .echo import EchoDevice, EchoDriver, demo_driver_request, plug_echo
from .manifest import DriverSpec, ServiceManifest, Services, boot_services
from .syscalls import SYS_EXIT, SYS_WRITE, SYS_YIELD, USER_BASE, SyscallService, demo_syscall_loop

__all__ = [
    "DriverSpec", "EchoDevice", "EchoDriver", "SYS_EXIT", "SYS_WRITE", "SYS_YIELD", "ServiceManifest",
    "Services", "SyscallService", "USER_BASE", "boot_services", "demo_driver_request", "demo_syscall_loop",
    "plug_echo",
]
