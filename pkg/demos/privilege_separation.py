"""Walk through what a de-privileged service can and cannot do with hardware.

    python demos/privilege_separation.py
"""

from framekernel.frame_alloc import AllocLayout, BuddyAllocator, alloc_frames, register_frame_allocator
from framekernel.machine import Machine
from framekernel.privsep import KernelStack, RegisterFile, Space, VmSpace


def attempt(label, fn):
    try:
        result = fn()
    except Exception as exc:  # the point is to show which error each misuse gets
        print(f"  {label:44} refused: {type(exc).__name__}")
    else:
        print(f"  {label:44} ok -> {result}")


def main():
    m = Machine(frame_count=32)
    m.plug(RegisterFile("nic", 0x100), Space.MEM, 0xFEB0_0000, 0xFEB0_0100, vectors=[40])
    m.seal()
    register_frame_allocator(m.mem, BuddyAllocator(m.mem.frame_size))

    print("memory typing")
    table = alloc_frames(m.mem, AllocLayout.frames(1), "page_table")
    attempt("map a page-table frame into user space", lambda: VmSpace(m.mem).map(0x40_0000, table))
    attempt("hand a page-table frame to a device", lambda: m.iommu.map(table))
    buf = alloc_frames(m.mem, AllocLayout.frames(1))
    win = m.iommu.map(buf)
    attempt("device writes inside its DMA window", lambda: m.device_dma_write("nic", win.iova, b"ok").value)
    attempt("device writes one byte past it", lambda: m.device_dma_write("nic", win.iova + win.span, b"!").value)

    print("I/O and interrupts")
    attempt("acquire the NIC's registers", lambda: m.io.acquire_mem(0xFEB0_0000, 0xFEB0_0100))
    attempt("acquire the interrupt controller", lambda: m.io.acquire_mem(0xFEE0_0000, 0xFEE0_1000))
    attempt("acquire PCI config ports", lambda: m.io.acquire_port(0xCF8, 0xD00))
    m.irq.register(40, lambda v: print(f"    handler ran for vector {v}"))
    attempt("NIC raises its own vector", lambda: m.device_raise("nic", 40))
    attempt("another device raises it", lambda: m.device_raise("rogue", 40))

    print("kernel stacks")
    ks = KernelStack(m.mem, 1)
    attempt("write the top of the stack", lambda: ks.write(0, 1))
    attempt("write one byte below it", lambda: ks.write(-1, 1))


if __name__ == "__main__":
    main()
