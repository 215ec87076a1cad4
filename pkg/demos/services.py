"""Boot the de-privileged services and exercise each one.

    python demos/services.py
"""

from framekernel.machine import Machine
from framekernel.privsep import SetReg, Store, Syscall, UserExit
from framekernel.services import EchoDriver, ServiceManifest, boot_services, plug_echo
from framekernel.services.syscalls import SYS_WRITE, SYS_YIELD, USER_BASE
from framekernel.tcb import tcb_scan

MMIO = 0xFEB0_0000


def main():
    m = Machine(frame_count=256, ncpus=2)
    plug_echo(m, mmio=MMIO, vector=42)
    m.seal()
    svc = boot_services(m, ServiceManifest(scheduler="vruntime"))

    for i, word in enumerate([b"hello ", b"world\n"]):
        svc.syscalls.load(f"user{i}", [
            SetReg("rdi", USER_BASE), SetReg("rsi", len(word)), Store(USER_BASE, word),
            Syscall(SYS_YIELD), Syscall(SYS_WRITE), UserExit(0),
        ])
    ticks = svc.syscalls.run()
    print(f"console after {ticks} ticks: {bytes(svc.syscalls.console)!r}")
    for name in svc.syscalls.tasks:
        print(f"  {name}: {svc.syscalls.trap_log(name)}")

    drv = EchoDriver(m, MMIO, vector=42)
    print(f"echo reply: {drv.request(b'ping')!r}, interrupts seen: {drv.completions}")
    drv.close()
    print(f"frames still referenced: {m.mem.census()}")

    rep = tcb_scan()
    print(f"privileged share of code: {rep.ratio:.1%}; forbidden references in services: {len(rep.findings)}")


if __name__ == "__main__":
    main()
