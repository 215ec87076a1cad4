"""Exception hierarchy.

Two families: :class:`FrameworkError` for recoverable conditions reported to
the caller, and :class:`Fault` for conditions a real kernel would panic on.
Faults are never caught inside the framework.
"""


class FrameworkError(Exception):
    """Base class for recoverable errors."""


class Fault(Exception):
    """Unrecoverable condition (a kernel panic in the real thing)."""


# --- memory model -----------------------------------------------------------

class OutOfBounds(FrameworkError):
    pass


class OverlappingRegions(FrameworkError):
    pass


class UnalignedRegion(FrameworkError):
    pass


class SnapshotError(FrameworkError):
    pass


class SaturationFault(Fault):
    """A reference count would exceed its 32-bit width."""


# --- frames -----------------------------------------------------------------

class InUse(FrameworkError):
    pass


class OutOfRange(FrameworkError):
    pass


class Unaligned(FrameworkError):
    pass


class Misaligned(FrameworkError):
    pass


class UnknownMetaKind(FrameworkError):
    pass


class RegistrationClosed(FrameworkError):
    """Metadata kinds cannot be registered once frames have been claimed."""


class TypedAccessRejected(FrameworkError):
    """Byte access was attempted through a handle to typed memory."""


class StaleHandle(Fault):
    """A handle was used (or dropped) after it was already dropped."""


# --- policy injection -------------------------------------------------------

class AlreadyRegistered(FrameworkError):
    pass


class TooLate(FrameworkError):
    pass


class NotRegistered(FrameworkError):
    pass


class BadLayout(FrameworkError):
    pass


class PolicyExhausted(FrameworkError):
    pass


class PolicyUnsound(FrameworkError):
    """The injected policy returned memory that failed validation."""


class ReentrantCall(Fault):
    pass


class Exhausted(FrameworkError):
    pass


class BadGeometry(FrameworkError):
    pass


class SlabFull(FrameworkError):
    pass


class ForeignSlot(FrameworkError):
    pass


class DoubleFree(Fault):
    pass


class Misfit(FrameworkError):
    pass


class ActiveSlotsRemain(Fault):
    pass


class GuardViolation(Fault):
    """Raised only in strict mode; otherwise guard hits are reports."""


# --- privilege separation ---------------------------------------------------

class TypedFrameRejected(FrameworkError):
    pass


class TypedMemoryRejected(FrameworkError):
    pass


class Overlap(FrameworkError):
    pass


class NotMapped(FrameworkError):
    pass


class PermissionDenied(FrameworkError):
    pass


class GuardFault(Fault):
    """An access touched a kernel stack's guard page."""


class SensitiveRange(FrameworkError):
    pass


class RegistrySealed(FrameworkError):
    pass


class RegistryNotSealed(FrameworkError):
    pass


class VectorBusy(FrameworkError):
    pass


# --- oracle / services / cli -----------------------------------------------

class TooLarge(FrameworkError):
    pass


class DeviceTimeout(FrameworkError):
    pass


class UnknownSyscall(FrameworkError):
    pass


class ParseError(FrameworkError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column
