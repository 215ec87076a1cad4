"""Command-line front end: ``fk run|bench|oracle|snapshot``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench as benchmod
from . import scenario
from .errors import FrameworkError, ParseError, TooLarge
from .mem import MemoryMap, diff
from .oracle import EXHAUSTIVE_LIMIT, Kind, OracleSession, check_interleavings, dedupe, parse_trace, split_threads


def _seed(arg: Optional[int]) -> Optional[int]:
    if arg is not None:
        return arg
    env = os.environ.get("FK_SEED")
    return int(env, 0) if env else None


def _load(path: str) -> scenario.Scenario:
    try:
        return scenario.load(path)
    except ParseError as exc:
        exc.path = path
        raise


def cmd_run(args) -> int:
    sc = _load(args.file)
    res = scenario.Runner(sc, _seed(args.seed), True if args.strict_guard else None).run()
    for line in res.log:
        print(line)
    for f in res.failures:
        print(f"FAIL {f}")
    print("PASS" if res.ok else f"FAILED ({len(res.failures)} expectation(s))")
    return 0 if res.ok else 1


def cmd_bench(args) -> int:
    rows = benchmod.run_bench(args.filter, args.iters)
    print(benchmod.format_table(rows))
    if args.csv:
        if args.csv == "-":
            benchmod.write_csv(rows, sys.stdout)
        else:
            with open(args.csv, "w", newline="") as fh:
                benchmod.write_csv(rows, fh)
    return 0


def _print_violations(violations) -> None:
    for v in violations:
        print(json.dumps(v.record()))
    counts = {k.value: sum(v.kind is k for v in violations) for k in Kind}
    summary = ", ".join(f"{k}: {n}" for k, n in counts.items() if n)
    print(f"{len(violations)} violation(s)" + (f" ({summary})" if summary else ""))


def cmd_oracle(args) -> int:
    if args.trace:
        text = Path(args.trace).read_text()
        try:
            threads = split_threads(parse_trace(text))
        except ParseError as exc:
            exc.path = args.trace
            raise
        limit = EXHAUSTIVE_LIMIT
        n = sum(len(t) for t in threads)
        if args.exhaustive and n > limit:
            raise TooLarge(f"{n} events exceed the exhaustive limit of {limit}")
        result = check_interleavings(threads, limit=limit, seed=_seed(args.seed) or 0)
        mode = "exhaustive" if result.exhaustive else "sampled"
        print(f"{result.schedules} {mode} schedule(s), {result.flagged} with findings")
        found = result.distinct
    else:
        sc = _load(args.attach)
        session = OracleSession()
        runner = scenario.Runner(sc, _seed(args.seed), setup=lambda m: setattr(m.mem, "tracer", session))
        res = runner.run()
        print(f"scenario {'passed' if res.ok else 'FAILED'}; {len(session.events)} events observed")
        for f in res.failures:
            print(f"FAIL {f}")
        found = dedupe(session.violations)
    _print_violations(found)
    return 1 if found else 0


def cmd_snapshot(args) -> int:
    if args.action == "dump":
        sc = _load(args.scenario)
        runner = scenario.Runner(sc, _seed(args.seed))
        res = runner.run()
        Path(args.out).write_bytes(runner.machine.mem.dump())
        print(f"wrote {args.out} (scenario {'passed' if res.ok else 'FAILED'})")
        return 0 if res.ok else 1
    a = MemoryMap.load(Path(args.a).read_bytes())
    b = MemoryMap.load(Path(args.b).read_bytes())
    deltas = diff(a, b)
    for d in deltas:
        print(d)
    print(f"{len(deltas)} frame(s) differ")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fk", description="Framekernel simulator tools.")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("file")
    r.add_argument("--seed", type=int)
    r.add_argument("--strict-guard", action="store_true", help="abort on a scheduler guard violation")
    r.set_defaults(fn=cmd_run)

    b = sub.add_parser("bench", help="measure the cost of safety checks")
    b.add_argument("--filter", help="regular expression over operation names")
    b.add_argument("--iters", type=int, default=benchmod.DEFAULT_ITERS)
    b.add_argument("--csv", help="also write CSV here ('-' for stdout)")
    b.set_defaults(fn=cmd_bench)

    o = sub.add_parser("oracle", help="check a trace or an instrumented scenario run")
    src = o.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace")
    src.add_argument("--attach", metavar="SCENARIO")
    o.add_argument("--exhaustive", action="store_true", help="refuse to fall back to sampling")
    o.add_argument("--seed", type=int)
    o.set_defaults(fn=cmd_oracle)

    s = sub.add_parser("snapshot", help="dump or compare memory snapshots")
    ssub = s.add_subparsers(dest="action", required=True)
    d = ssub.add_parser("dump", help="run a scenario and save the final memory")
    d.add_argument("scenario")
    d.add_argument("out")
    d.add_argument("--seed", type=int)
    df = ssub.add_parser("diff", help="list frame-level differences")
    df.add_argument("a")
    df.add_argument("b")
    s.set_defaults(fn=cmd_snapshot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as exc:
        where = getattr(exc, "path", None)
        print(f"error: {where + ':' if where else ''}{exc}", file=sys.stderr)
        return 2
    except (FrameworkError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
