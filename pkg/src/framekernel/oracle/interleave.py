"""Deterministic interleaving engine.

A schedule is a tuple of thread indices, one entry per step. Exhaustive
enumeration yields every merge of the per-thread sequences exactly once;
beyond the size limit, :func:`interleave_sample` draws merges uniformly at
random from a seeded generator.
"""

from __future__ import annotations

import math
import random
from typing import Callable, Iterator, Sequence

from ..errors import TooLarge

EXHAUSTIVE_LIMIT = 12


def _lengths(threads) -> list[int]:
    return [t if isinstance(t, int) else len(t) for t in threads]


def count_interleavings(threads) -> int:
    """Multinomial coefficient (sum n_i)! / prod(n_i!)."""
    lengths = _lengths(threads)
    total = math.factorial(sum(lengths))
    for n in lengths:
        total //= math.factorial(n)
    return total


def interleave_enumerate(threads, limit: int = EXHAUSTIVE_LIMIT) -> Iterator[tuple]:
    """Every interleaving of threads with the given event sequences (or lengths)."""
    remaining = _lengths(threads)
    total = sum(remaining)
    if total > limit:
        raise TooLarge(f"{total} events exceeds exhaustive limit {limit}")
    prefix: list[int] = []

    def rec():
        if len(prefix) == total:
            yield tuple(prefix)
            return
        for t, left in enumerate(remaining):
            if left:
                remaining[t] -= 1
                prefix.append(t)
                yield from rec()
                prefix.pop()
                remaining[t] += 1

    yield from rec()


def interleave_sample(threads, n: int, seed: int = 0) -> Iterator[tuple]:
    """``n`` uniformly random interleavings (picking a thread with weight = events left)."""
    rng = random.Random(seed)
    lengths = _lengths(threads)
    for _ in range(n):
        left = list(lengths)
        total = sum(left)
        sched = []
        for remaining_total in range(total, 0, -1):
            r = rng.randrange(remaining_total)
            for t, k in enumerate(left):
                if r < k:
                    break
                r -= k
            left[t] -= 1
            sched.append(t)
        yield tuple(sched)


def merge(threads: Sequence[Sequence], schedule: Sequence[int]) -> list:
    """The merged sequence of per-thread items for ``schedule``."""
    pos = [0] * len(threads)
    out = []
    for t in schedule:
        out.append(threads[t][pos[t]])
        pos[t] += 1
    return out


def schedules(threads, limit: int = EXHAUSTIVE_LIMIT, samples: int = 10_000, seed: int = 0):
    """Exhaustive when small enough, otherwise a seeded sample. Returns (iterator, exhaustive?)."""
    if sum(_lengths(threads)) <= limit:
        return interleave_enumerate(threads, limit), True
    return interleave_sample(threads, samples, seed), False


def run_schedule(make_state: Callable, threads: Sequence[Sequence[Callable]], schedule: Sequence[int], check=None):
    """Execute step callables in schedule order on a fresh state.

    ``check(state)`` runs after every step; the state is returned.
    """
    state = make_state()
    pos = [0] * len(threads)
    for t in schedule:
        threads[t][pos[t]](state)
        pos[t] += 1
        if check is not None:
            check(state)
    return state


def explore(make_state: Callable, threads: Sequence[Sequence[Callable]], check=None, limit: int = EXHAUSTIVE_LIMIT,
            samples: int = 10_000, seed: int = 0):
    """Run every (or a sample of) schedule; yields ``(schedule, final_state)``."""
    it, _ = schedules(threads, limit, samples, seed)
    for sched in it:
        yield sched, run_schedule(make_state, threads, sched, check)
