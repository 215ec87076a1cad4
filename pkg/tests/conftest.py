import time
from contextlib import contextmanager

import pytest

_LINES = pytest.StashKey[list]()


class Criterion:
    detail = ""


@pytest.fixture
def criterion(request):
    """Times a block against a budget and records one PASS/FAIL line for the summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    @contextmanager
    def run(name: str, budget_s: float, tolerance: str):
        c = Criterion()
        t0 = time.perf_counter()
        ok = False
        err = ""
        try:
            yield c
            ok = True
        except BaseException as exc:
            err = f"{type(exc).__name__}: {exc}"[:160]
            raise
        finally:
            dt = time.perf_counter() - t0
            in_time = dt < budget_s
            verdict = "PASS" if ok and in_time else "FAIL"
            note = c.detail if ok else (c.detail + "; " if c.detail else "") + err
            if ok and not in_time:
                note += f"; over budget {budget_s:g}s"
            line = f"{verdict} {name:34} {dt:7.2f}s (budget {budget_s:g}s)  [{tolerance}]  {note}"
            lines.append(line)
            print(line)
        assert in_time, f"{name} took {dt:.2f}s, budget {budget_s}s"

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
