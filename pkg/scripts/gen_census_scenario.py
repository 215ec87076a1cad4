"""Write scenarios/census_100.fk: 100 random claim/dup/drop actions.

Expected values come from a shadow model kept here (a per-frame reference
count list), not from the framework, so running the scenario checks the
framework against the shadow.
"""

import random
import sys
from pathlib import Path

FRAMES = 32
FRAME_SIZE = 4096
OUT = Path(__file__).resolve().parent.parent / "scenarios" / "census_100.fk"


def generate(seed: int = 2024, n_ops: int = 100) -> str:
    rng = random.Random(seed)
    refs = [0] * FRAMES
    live: dict[str, tuple[int, int]] = {}
    lines = [
        "# Generated by scripts/gen_census_scenario.py; expectations from a shadow refcount model.",
        "[config]",
        f"frame_size = {FRAME_SIZE}",
        f"frame_count = {FRAMES}",
        "heap = off",
        "",
        "[actions]",
    ]
    serial = 0
    for _ in range(n_ops):
        verb = rng.choices(["claim", "dup", "drop"], [5, 3, 3])[0]
        if verb != "claim" and not live:
            verb = "claim"
        if verb == "claim":
            first = rng.randrange(FRAMES)
            n = rng.randint(1, 3)
            name = f"s{serial}"
            serial += 1
            lines.append(f"claim {name} {first * FRAME_SIZE:#x} {n}")
            if first + n > FRAMES:
                lines.append("expect error OutOfRange")
            elif any(refs[first:first + n]):
                lines.append("expect error InUse")
            else:
                live[name] = (first, n)
                for f in range(first, first + n):
                    refs[f] += 1
        elif verb == "dup":
            src = rng.choice(sorted(live))
            name = f"s{serial}"
            serial += 1
            lines.append(f"dup {name} {src}")
            live[name] = live[src]
            first, n = live[src]
            for f in range(first, first + n):
                refs[f] += 1
        else:
            name = rng.choice(sorted(live))
            lines.append(f"drop {name}")
            first, n = live.pop(name)
            for f in range(first, first + n):
                refs[f] -= 1
    lines.append(f"expect census {sum(refs)}")
    lines.append(f"expect unused {refs.count(0)}")
    for f in sorted({f for first, n in live.values() for f in range(first, first + n)}):
        lines.append(f"expect refcount {f} {refs[f]}")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    OUT.write_text(generate(*(int(a) for a in sys.argv[1:2])))
    print(f"wrote {OUT}")
