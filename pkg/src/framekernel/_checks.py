"""Switches for safety checks and fault injection.

Benchmarks turn checks off to measure their cost; tests turn faults on to
show that the oracle notices. Neither is meant for normal use.
"""

from contextlib import contextmanager


class _Switches:
    __slots__ = ("enabled",)

    def __init__(self):
        self.enabled = True


CHECKS = _Switches()


@contextmanager
def checks_disabled():
    """Run the block with boundary/ownership/guard checks off (bench mode)."""
    prev = CHECKS.enabled
    CHECKS.enabled = False
    try:
        yield
    finally:
        CHECKS.enabled = prev


def set_checks(enabled: bool) -> None:
    CHECKS.enabled = bool(enabled)
