"""Regenerate traces/*.trace from the case builders in framekernel.oracle.cases."""

from pathlib import Path

from framekernel.oracle import cases
from framekernel.oracle.events import format_trace

OUT = Path(__file__).resolve().parent.parent / "traces"

HEADERS = {
    "metadata_race_flawed": "drop and from_unused touch one frame's count with plain load/store",
    "metadata_race_fixed": "same accesses, each a compare-and-exchange",
    "heap_mutability_flawed": "heap range exposed read-only, then written by an allocation",
    "heap_mutability_fixed": "heap range exposed mutable, then written",
}


def main() -> None:
    OUT.mkdir(exist_ok=True)
    for name, note in HEADERS.items():
        threads = getattr(cases, name)()
        body = "".join(format_trace(t) for t in threads)
        (OUT / f"{name}.trace").write_text(f"# {note}\n# tid op args\n{body}")
        print(f"wrote traces/{name}.trace")


if __name__ == "__main__":
    main()
