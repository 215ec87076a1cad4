"""Reference buddy allocator policy.

Plain Python, no framework privileges: it only tracks addresses and is
plugged in through :func:`~framekernel.frame_alloc.register_frame_allocator`.
Blocks are power-of-two runs of frames aligned to their own size. Among free
blocks of the chosen order the lowest address wins.
"""

import bisect
import threading


class BuddyAllocator:
    def __init__(self, frame_size=4096, max_order=20):
        self.frame_size = frame_size
        self.max_order = max_order
        self.free_lists = [[] for _ in range(max_order + 1)]
        self.allocations = {}
        self._lock = threading.Lock()
        self.total_bytes = 0

    # -- injection surface ---------------------------------------------------

    def add_free_memory(self, addr, size):
        fs = self.frame_size
        if addr % fs or size % fs:
            raise ValueError("region not frame aligned")
        frame, count = addr // fs, size // fs
        with self._lock:
            self.total_bytes += size
            while count:
                order = min((frame & -frame).bit_length() - 1 if frame else self.max_order,
                            count.bit_length() - 1, self.max_order)
                self._insert(order, frame)
                frame += 1 << order
                count -= 1 << order

    def alloc(self, layout):
        order = self.order_for(layout.size, layout.align)
        with self._lock:
            frame = self._take(order)
        if frame is None:
            return None
        return frame * self.frame_size

    def dealloc(self, addr, size):
        frame = addr // self.frame_size
        with self._lock:
            order = self.allocations.pop(frame, None)
            if order is None:
                raise ValueError(f"{addr:#x} was not allocated")
            if self.order_for(size, self.frame_size) > order:
                self.allocations[frame] = order
                raise ValueError(f"size {size} exceeds allocation of order {order}")
            self._release(frame, order)

    # -- internals -----------------------------------------------------------

    def order_for(self, size, align):
        frames = max(-(-size // self.frame_size), align // self.frame_size, 1)
        return (frames - 1).bit_length()

    def _insert(self, order, frame):
        bisect.insort(self.free_lists[order], frame)

    def _remove(self, order, frame):
        lst = self.free_lists[order]
        i = bisect.bisect_left(lst, frame)
        if i < len(lst) and lst[i] == frame:
            del lst[i]
            return True
        return False

    def _take(self, order):
        bucket = order
        while bucket <= self.max_order and not self.free_lists[bucket]:
            bucket += 1
        if bucket > self.max_order:
            return None
        frame = self.free_lists[bucket].pop(0)
        while bucket > order:
            # split, keep the lower half
            bucket -= 1
            self._insert(bucket, frame + (1 << bucket))
        self.allocations[frame] = order
        return frame

    def _release(self, frame, order):
        while order < self.max_order:
            buddy = frame ^ (1 << order)
            if not self._remove(order, buddy):
                break
            frame = min(frame, buddy)
            order += 1
        self._insert(order, frame)

    # -- introspection -------------------------------------------------------

    @property
    def free_bytes(self):
        with self._lock:
            return sum(len(lst) << o for o, lst in enumerate(self.free_lists)) * self.frame_size

    @property
    def allocated_bytes(self):
        with self._lock:
            return sum(1 << o for o in self.allocations.values()) * self.frame_size

    def free_blocks(self):
        """(order, frame) pairs currently free, in ascending order."""
        with self._lock:
            return [(o, f) for o, lst in enumerate(self.free_lists) for f in lst]
