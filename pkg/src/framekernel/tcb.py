"""Static check that the services stay on the safe interface, plus line counts.

Lines are counted without blanks, comments and docstrings. Modules are
classified as privileged framework code, de-privileged policy/service code,
or tooling (oracle, CLI), which counts toward neither side.
"""

from __future__ import annotations

import ast
import io
import tokenize
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

PACKAGE_ROOT = Path(__file__).resolve().parent
SERVICES_DIR = "services"
SAFE_MODULE = "api"

DEPRIVILEGED = ("services/", "frame_alloc/buddy.py", "slab/heap.py", "sched/policies.py")
TOOLING = ("oracle/", "sched/drive.py", "cli.py", "scenario.py", "bench.py", "tcb.py", "__main__.py")

# entry points and state reserved for the framework
FORBIDDEN = frozenset({
    "phys_read", "phys_write", "phys_fill", "meta_transition", "_racy_transition", "_force", "_peek",
    "store", "_refs", "_states", "_tags", "_lock", "tracer", "release_hook", "alloc_slot",
    "unsynchronized_meta", "readonly_heap_exposure", "CHECKS", "checks_disabled", "set_checks",
    "_running", "_runnable", "_exited", "_switch", "_rflags", "_regs", "_windows", "_auth", "_lines",
    "bus", "registry", "authorize",
})


@dataclass(frozen=True)
class Finding:
    path: str
    line: int
    col: int
    name: str

    def __str__(self):
        return f"{self.path}:{self.line}:{self.col}: privileged reference {self.name!r}"


@dataclass
class TcbReport:
    lines: dict[str, int] = field(default_factory=dict)
    classes: dict[str, str] = field(default_factory=dict)
    findings: list[Finding] = field(default_factory=list)

    def total(self, cls: str) -> int:
        return sum(n for p, n in self.lines.items() if self.classes[p] == cls)

    @property
    def ratio(self) -> float:
        priv, depriv = self.total("privileged"), self.total("deprivileged")
        return priv / (priv + depriv) if priv + depriv else 0.0

    def format(self) -> str:
        out = [f"{'module':40} {'class':13} {'lines':>6}"]
        for p in sorted(self.lines):
            out.append(f"{p:40} {self.classes[p]:13} {self.lines[p]:>6}")
        priv, depriv = self.total("privileged"), self.total("deprivileged")
        out.append(f"privileged {priv} / (privileged + de-privileged) {priv + depriv} = {self.ratio:.3f}")
        out.append(f"forbidden references in services: {len(self.findings)}")
        out += [str(f) for f in self.findings]
        return "\n".join(out)


def classify(rel: str) -> str:
    if any(rel == t or rel.startswith(t) for t in TOOLING):
        return "tooling"
    if any(rel == d or rel.startswith(d) for d in DEPRIVILEGED):
        return "deprivileged"
    return "privileged"


def count_lines(source: str) -> int:
    """Logical source lines, excluding blanks, comments and docstrings."""
    skip: set[int] = set()
    tree = ast.parse(source)
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
            body = node.body
            if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant) \
                    and isinstance(body[0].value.value, str):
                skip.update(range(body[0].lineno, body[0].end_lineno + 1))
    lines: set[int] = set()
    ignore = {tokenize.COMMENT, tokenize.NL, tokenize.NEWLINE, tokenize.INDENT, tokenize.DEDENT,
              tokenize.ENCODING, tokenize.ENDMARKER}
    for tok in tokenize.generate_tokens(io.StringIO(source).readline):
        if tok.type in ignore:
            continue
        lines.update(n for n in range(tok.start[0], tok.end[0] + 1) if n not in skip)
    return len(lines)


def scan_source(source: str, path: str, package: str = "framekernel") -> list[Finding]:
    """Forbidden names, attributes and imports in one services module."""
    found = []

    def hit(node, name):
        found.append(Finding(path, node.lineno, node.col_offset + 1, name))

    for node in ast.walk(ast.parse(source, path)):
        if isinstance(node, ast.Attribute) and node.attr in FORBIDDEN:
            hit(node, node.attr)
        elif isinstance(node, ast.Name) and node.id in FORBIDDEN:
            hit(node, node.id)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in ("getattr", "setattr", "delattr") and len(node.args) >= 2 \
                and isinstance(node.args[1], ast.Constant) and node.args[1].value in FORBIDDEN:
            hit(node, node.args[1].value)
        elif isinstance(node, ast.Import):
            for a in node.names:
                parts = a.name.split(".")
                if parts[0] == package and parts[1:2] != [SAFE_MODULE]:
                    hit(node, a.name)
        elif isinstance(node, ast.ImportFrom):
            mod = node.module or ""
            if node.level >= 2 or (node.level == 0 and mod.split(".")[0] == package):
                target = mod.split(".") if node.level else mod.split(".")[1:]
                if target[:1] != [SAFE_MODULE]:
                    hit(node, "." * node.level + mod)
            for a in node.names:
                if a.name in FORBIDDEN:
                    hit(node, a.name)
    return found


def tcb_scan(root: Optional[Path] = None) -> TcbReport:
    root = Path(root) if root is not None else PACKAGE_ROOT
    report = TcbReport()
    for path in sorted(root.rglob("*.py")):
        rel = path.relative_to(root).as_posix()
        source = path.read_text()
        report.lines[rel] = count_lines(source)
        report.classes[rel] = classify(rel)
        if rel.startswith(SERVICES_DIR + "/"):
            report.findings += scan_source(source, rel)
    return report
