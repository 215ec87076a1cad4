"""Scenario files: platform configuration plus a scripted list of actions.

See ``docs/scenario-format.md`` for the grammar. Parsing validates verbs and
argument shapes up front so that a malformed file fails with a line and
column before anything runs.
"""

from __future__ import annotations

import codecs
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

from . import errors
from .errors import FrameworkError, Fault, ParseError
from .frame import Segment, segment_from_unused
from .frame_alloc import AllocLayout, alloc_frames
from .machine import DEFAULT_LABELS, Machine, MachineConfig
from .privsep import (
    Direction, DmaMode, KernelStack, Load, Sensitivity, SetReg, Space, Store, Syscall, UserContext,
    UserExit, VmSpace,
)
from .sched import Exit, Run, Sleep, Yield
from .services import DriverSpec, EchoDriver, ServiceManifest, boot_services, plug_echo
from .slab import TypeTag
from .slab.heap import DEFAULT_CLASSES, heap_alloc

SECTIONS = ("config", "labels", "devices", "actions")


# -- tokens ------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    text: str
    line: int
    col: int
    quoted: bool = False

    def fail(self, msg: str) -> ParseError:
        return ParseError(msg, self.line, self.col)

    def int(self) -> int:
        try:
            return int(self.text, 0)
        except ValueError:
            raise self.fail(f"expected an integer, got {self.text!r}") from None

    def data(self) -> bytes:
        return _data(self.text, self.quoted, self)


def _data(text: str, quoted: bool, tok: Token) -> bytes:
    if not quoted and text.startswith("hex:"):
        try:
            return bytes.fromhex(text[4:])
        except ValueError:
            raise tok.fail(f"bad hex data {text!r}") from None
    return text.encode("latin-1") if quoted else text.encode()


def tokenize(line: str, lineno: int) -> list[Token]:
    """Whitespace-separated words; double quotes group and support backslash escapes."""
    toks: list[Token] = []
    i, n = 0, len(line)
    while i < n:
        c = line[i]
        if c.isspace():
            i += 1
            continue
        if c == "#":
            break
        start, buf, quoted = i, [], False
        while i < n and not line[i].isspace():
            if line[i] == "#" and not buf:
                break
            if line[i] == '"':
                quoted = True
                j = i + 1
                raw = []
                while j < n and line[j] != '"':
                    if line[j] == "\\" and j + 1 < n:
                        raw.append(line[j:j + 2])
                        j += 2
                    else:
                        raw.append(line[j])
                        j += 1
                if j >= n:
                    raise ParseError("unterminated string", lineno, i + 1)
                try:
                    buf.append(codecs.decode("".join(raw), "unicode_escape"))
                except UnicodeDecodeError:
                    raise ParseError("bad escape in string", lineno, i + 1) from None
                i = j + 1
            else:
                buf.append(line[i])
                i += 1
        toks.append(Token("".join(buf), lineno, start + 1, quoted))
    return toks


# -- structure ---------------------------------------------------------------

@dataclass(frozen=True)
class Action:
    verb: str
    args: tuple[Token, ...]
    line: int
    col: int

    def __str__(self):
        return " ".join([self.verb] + [repr(a.text) if a.quoted else a.text for a in self.args])


@dataclass
class Scenario:
    config: dict[str, Token] = field(default_factory=dict)
    labels: list[tuple[Space, int, int, Sensitivity]] = field(default_factory=list)
    has_labels: bool = False
    devices: list[dict[str, Any]] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    source: str = "<string>"


CONFIG_KEYS = {
    "frame_size": "int", "frame_count": "int", "ncpus": "int", "time_slice": "int", "seed": "int",
    "scheduler": ("round_robin", "vruntime"), "heap": ("on", "off"), "strict_guard": ("true", "false"),
}

USER_OPS = ("store", "load", "set", "syscall", "exit")
TASK_OPS = ("run", "yield", "sleep", "exit")

# verb -> (min args, max args or None for unbounded)
VERBS: dict[str, tuple[int, Optional[int]]] = {
    "alloc": (2, 3), "claim": (3, 4), "dup": (2, 2), "drop": (1, 1), "write": (3, 3),
    "map": (3, 4), "unmap": (2, 2),
    "spawn": (1, None), "user": (1, None), "tick": (0, 2), "wake": (1, 1), "run": (0, 1),
    "dma-map": (2, 4), "dma-unmap": (1, 1), "dma-write": (4, 4), "fuzz-dma": (2, 2),
    "acquire": (4, 4), "release": (1, 1), "io-write": (3, 4), "io-read": (2, 3),
    "irq": (2, 2), "raise": (2, 2),
    "driver": (2, 5), "request": (2, 2), "close": (1, 1),
    "heap": (2, 3), "free": (1, 1),
    "stack": (2, 2), "stack-write": (3, 3), "stack-read": (2, 2),
    "context": (1, 1), "set-flags": (2, 2),
    "expect": (1, None),
}

EXPECTS: dict[str, tuple[int, Optional[int]]] = {
    "census": (1, 1), "refcount": (2, 2), "unused": (1, 1), "error": (1, 1), "ok": (0, 0),
    "console": (1, 1), "traps": (1, None), "current": (2, 2), "guard-violations": (1, 1),
    "blocked": (1, 1), "delivered": (2, 2), "dropped": (1, 1), "response": (2, 2), "read": (3, 3),
    "exited": (1, 1), "value": (1, 1), "flags": (2, 2), "mapped": (2, 2), "live": (2, 2),
}


def _arity(tok: Token, table: dict, what: str, args: list[Token]):
    if tok.text not in table:
        raise tok.fail(f"unknown {what} {tok.text!r}")
    lo, hi = table[tok.text]
    if len(args) < lo or (hi is not None and len(args) > hi):
        want = f"{lo}" if lo == hi else f"{lo}..{hi if hi is not None else ''}"
        raise tok.fail(f"{what} {tok.text!r} takes {want} arguments, got {len(args)}")


def _check_task_op(tok: Token) -> None:
    head, _, rest = tok.text.partition(":")
    if head not in TASK_OPS:
        raise tok.fail(f"unknown task op {tok.text!r}")
    if head == "run":
        Token(rest, tok.line, tok.col).int()


def _check_user_op(tok: Token) -> None:
    parts = tok.text.split(":", 2)
    head = parts[0]
    need = {"store": 3, "load": 3, "set": 3, "syscall": 2, "exit": 1}
    if head not in USER_OPS:
        raise tok.fail(f"unknown user op {tok.text!r}")
    if head == "load":
        parts = tok.text.split(":")
        if len(parts) != 4:
            raise tok.fail("load takes load:VADDR:SIZE:REG")
        return
    if len(parts) < need[head] or (head in ("syscall", "exit") and len(parts) > 2):
        raise tok.fail(f"malformed user op {tok.text!r}")


def parse(text: str, source: str = "<string>") -> Scenario:
    sc = Scenario(source=source)
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        toks = tokenize(raw, lineno)
        if not toks:
            continue
        head = toks[0]
        if head.text.startswith("[") and not head.quoted:
            name = head.text.strip("[]")
            if not head.text.endswith("]") or len(toks) != 1 or name not in SECTIONS:
                raise head.fail(f"bad section header {raw.strip()!r}")
            section = name
            if name == "labels":
                sc.has_labels = True
            continue
        if section is None:
            raise head.fail("content before the first section header")
        if section == "config":
            _parse_config(sc, toks)
        elif section == "labels":
            _parse_label(sc, toks)
        elif section == "devices":
            _parse_device(sc, toks)
        else:
            args = toks[1:]
            _arity(head, VERBS, "action", args)
            if head.text == "expect":
                _arity(args[0], EXPECTS, "expectation", args[1:])
            elif head.text == "spawn":
                for t in args[1:]:
                    _check_task_op(t)
            elif head.text == "user":
                for t in args[1:]:
                    _check_user_op(t)
            sc.actions.append(Action(head.text, tuple(args), head.line, head.col))
    return sc


def _parse_config(sc: Scenario, toks: list[Token]) -> None:
    if len(toks) != 3 or toks[1].text != "=":
        raise toks[0].fail("config lines look like 'key = value'")
    key, val = toks[0], toks[2]
    kind = CONFIG_KEYS.get(key.text)
    if kind is None:
        raise key.fail(f"unknown config key {key.text!r}")
    if kind == "int":
        val.int()
    elif val.text not in kind:
        raise val.fail(f"{key.text} must be one of {', '.join(kind)}")
    sc.config[key.text] = val


def _parse_label(sc: Scenario, toks: list[Token]) -> None:
    if len(toks) != 4:
        raise toks[0].fail("label lines look like 'mem|port LO HI sensitive|insensitive'")
    space, lo, hi, sens = toks
    if space.text not in ("mem", "port"):
        raise space.fail(f"unknown I/O space {space.text!r}")
    if sens.text not in ("sensitive", "insensitive"):
        raise sens.fail(f"unknown sensitivity {sens.text!r}")
    if lo.int() >= hi.int():
        raise hi.fail("empty range")
    sc.labels.append((Space(space.text), lo.int(), hi.int(), Sensitivity(sens.text)))


def _parse_device(sc: Scenario, toks: list[Token]) -> None:
    if len(toks) < 4 or toks[0].text != "echo" or toks[2].text != "mem":
        raise toks[0].fail("device lines look like 'echo NAME mem ADDR [vector N] [latency N]'")
    dev = {"name": toks[1].text, "mmio": toks[3].int(), "vector": None, "latency": 3}
    rest = toks[4:]
    if len(rest) % 2:
        raise rest[-1].fail("dangling device option")
    for k, v in zip(rest[::2], rest[1::2]):
        if k.text not in ("vector", "latency"):
            raise k.fail(f"unknown device option {k.text!r}")
        dev[k.text] = v.int()
    sc.devices.append(dev)


def load(path: Union[str, Path]) -> Scenario:
    p = Path(path)
    return parse(p.read_text(), str(p))


# -- execution ---------------------------------------------------------------

class ExpectFailed(Exception):
    pass


@dataclass
class RunResult:
    log: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class Runner:
    """Executes a parsed scenario against a fresh machine."""

    def __init__(self, sc: Scenario, seed: Optional[int] = None, strict_guard: Optional[bool] = None,
                 setup: Optional[Callable[[Machine], None]] = None):
        cfg = sc.config
        self.sc = sc
        self.seed = seed if seed is not None else (cfg["seed"].int() if "seed" in cfg else 0)
        self.rng = random.Random(self.seed)
        strict = strict_guard if strict_guard is not None else cfg.get("strict_guard", Token("false", 0, 0)).text == "true"
        mc = MachineConfig(
            frame_size=cfg["frame_size"].int() if "frame_size" in cfg else 4096,
            frame_count=cfg["frame_count"].int() if "frame_count" in cfg else 256,
            ncpus=cfg["ncpus"].int() if "ncpus" in cfg else 1,
            strict_guard=strict,
            labels=list(sc.labels) if sc.has_labels else list(DEFAULT_LABELS),
        )
        self.machine = m = Machine(mc)
        for d in sc.devices:
            plug_echo(m, d["name"], d["mmio"], d["vector"], d["latency"])
        m.seal()
        if setup is not None:
            setup(m)
        heap_on = cfg.get("heap", Token("on", 0, 0)).text == "on"
        manifest = ServiceManifest(
            scheduler=cfg["scheduler"].text if "scheduler" in cfg else "round_robin",
            time_slice=cfg["time_slice"].int() if "time_slice" in cfg else 5,
            heap_classes=DEFAULT_CLASSES if heap_on else (),
        )
        self.services = boot_services(m, manifest)
        self.names: dict[str, Any] = {}
        self.tasks: dict[str, int] = {}
        self.irq_counts: dict[str, int] = {}
        self.responses: dict[str, bytes] = {}
        self.value: Optional[int] = None
        self.result = RunResult()
        self._pending: Optional[BaseException] = None

    # helpers

    def _get(self, tok: Token, cls=object):
        obj = self.names.get(tok.text)
        if obj is None or not isinstance(obj, cls):
            raise ExpectFailed(f"line {tok.line}: no {getattr(cls, '__name__', 'object')} named {tok.text!r}")
        return obj

    def _tid(self, tok: Token) -> int:
        if tok.text in self.tasks:
            return self.tasks[tok.text]
        raise ExpectFailed(f"line {tok.line}: no task named {tok.text!r}")

    def _log(self, msg: str) -> None:
        self.result.log.append(msg)

    def run(self) -> RunResult:
        for act in self.sc.actions:
            if self._pending is not None and not (act.verb == "expect" and act.args[0].text == "error"):
                self._fail(act, f"unexpected {type(self._pending).__name__}: {self._pending}")
                self._pending = None
            try:
                getattr(self, "do_" + act.verb.replace("-", "_"))(act, *act.args)
            except ExpectFailed as exc:
                self._fail(act, str(exc))
            except (FrameworkError, Fault) as exc:
                self._pending = exc
                self._log(f"{act.line}: {act} -> {type(exc).__name__}: {exc}")
        if self._pending is not None:
            self.result.failures.append(f"end of file: unexpected {type(self._pending).__name__}: {self._pending}")
        return self.result

    def _fail(self, act: Action, msg: str) -> None:
        self.result.failures.append(f"{self.sc.source}:{act.line}: {msg}")
        self._log(f"{act.line}: {act} -> FAILED {msg}")

    def _done(self, act: Action, what: str = "ok") -> None:
        self._log(f"{act.line}: {act} -> {what}")

    # memory

    def do_alloc(self, act, name, n, kind=None):
        mem = self.machine.mem
        seg = alloc_frames(mem, AllocLayout.frames(n.int(), mem.frame_size), kind.text if kind else "anon")
        self.names[name.text] = seg
        self._done(act, f"frame {seg.first_frame}")

    def do_claim(self, act, name, addr, n, kind=None):
        seg = segment_from_unused(self.machine.mem, addr.int(), n.int(), kind.text if kind else "anon")
        self.names[name.text] = seg
        self._done(act)

    def do_dup(self, act, name, src):
        self.names[name.text] = self._get(src, Segment).dup()
        self._done(act)

    def do_drop(self, act, name):
        obj = self._get(name)
        obj.drop()
        self._done(act)

    def do_write(self, act, name, off, data):
        self._get(name, Segment).write_bytes(off.int(), data.data())
        self._done(act)

    def do_map(self, act, space, vaddr, handle, perms=None):
        vm = self.names.get(space.text)
        if vm is None:
            vm = self.names[space.text] = VmSpace(self.machine.mem)
        vm.map(vaddr.int(), self._get(handle, Segment), perms.text if perms else "rw")
        self._done(act)

    def do_unmap(self, act, space, vaddr):
        self._get(space, VmSpace).unmap(vaddr.int())
        self._done(act)

    # tasks

    def do_spawn(self, act, name, *ops):
        script = []
        for t in ops:
            head, _, rest = t.text.partition(":")
            script.append({"run": lambda: Run(int(rest, 0)), "yield": Yield, "sleep": Sleep, "exit": Exit}[head]())
        self.tasks[name.text] = self.machine.sched.spawn(script, name=name.text)
        self._done(act, f"task {self.tasks[name.text]}")

    def do_user(self, act, name, *ops):
        prog = []
        for t in ops:
            parts = t.text.split(":", 2)
            head = parts[0]
            if head == "store":
                prog.append(Store(int(parts[1], 0), _data(parts[2], t.quoted, t)))
            elif head == "load":
                _, va, size, reg = t.text.split(":")
                prog.append(Load(int(va, 0), int(size, 0), reg))
            elif head == "set":
                prog.append(SetReg(parts[1], int(parts[2], 0)))
            elif head == "syscall":
                prog.append(Syscall(int(parts[1], 0)))
            else:
                prog.append(UserExit(int(parts[1], 0) if len(parts) > 1 else 0))
        task = self.services.syscalls.load(name.text, prog)
        self.tasks[name.text] = task.tid
        self._done(act, f"task {task.tid}")

    def do_tick(self, act, which=None, count=None):
        sched = self.machine.sched
        cpus = range(sched.ncpus) if which is None or which.text == "all" else [which.int()]
        for _ in range(count.int() if count else 1):
            for c in cpus:
                sched.tick(c)
        self._done(act, " ".join(f"cpu{c}={sched.current(c)}" for c in range(sched.ncpus)))

    def do_wake(self, act, name):
        self.machine.sched.wake(self._tid(name))
        self._done(act)

    def do_run(self, act, limit=None):
        sched = self.machine.sched
        n = 0
        for n in range(limit.int() if limit else 10_000):
            if all(t.exited for t in sched.tasks.values()):
                break
            for c in range(sched.ncpus):
                sched.tick(c)
        self._done(act, f"{n} ticks")

    # DMA and devices

    def do_dma_map(self, act, name, handle, direction=None, mode=None):
        m = self.machine.iommu.map(
            self._get(handle, Segment),
            DmaMode(mode.text) if mode else DmaMode.COHERENT,
            Direction(direction.text) if direction else Direction.BIDIRECTIONAL,
        )
        self.names[name.text] = m
        self._done(act, f"iova {m.iova:#x}")

    def do_dma_unmap(self, act, name):
        self.machine.iommu.unmap(self._get(name))
        self._done(act)

    def do_dma_write(self, act, dev, mapping, off, data):
        m = self._get(mapping)
        status = self.machine.device_dma_write(dev.text, m.iova + off.int(), data.data())
        self._done(act, status.value)

    def do_fuzz_dma(self, act, dev, n):
        iommu = self.machine.iommu
        live = iommu.live_mappings()
        lo = min((m.iova for m in live), default=0x1_0000_0000) - 0x2000
        hi = max((m.iova + m.span for m in live), default=0x1_0000_0000) + 0x2000
        landed = 0
        for _ in range(n.int()):
            iova = self.rng.randrange(lo, hi)
            data = bytes(self.rng.randrange(256) for _ in range(self.rng.randrange(1, 64)))
            landed += self.machine.device_dma_write(dev.text, iova, data).value == "ok"
        self._done(act, f"{landed} landed")

    def do_acquire(self, act, name, space, lo, hi):
        io = self.machine.io
        get = io.acquire_mem if space.text == "mem" else io.acquire_port
        self.names[name.text] = get(lo.int(), hi.int())
        self._done(act)

    def do_release(self, act, name):
        self._get(name).release()
        self._done(act)

    def do_io_write(self, act, name, off, value, width=None):
        self._get(name).write_once(off.int(), value.int(), width.int() if width else 4)
        self._done(act)

    def do_io_read(self, act, name, off, width=None):
        self.value = self._get(name).read_once(off.int(), width.int() if width else 4)
        self._done(act, hex(self.value))

    def do_irq(self, act, name, vector):
        key = name.text
        self.irq_counts.setdefault(key, 0)

        def handler(v, key=key):
            self.irq_counts[key] += 1

        self.names[key] = self.machine.irq.register(vector.int(), handler)
        self._done(act)

    def do_raise(self, act, dev, vector):
        ok = self.machine.device_raise(dev.text, vector.int())
        self._done(act, "delivered" if ok else "dropped")

    def do_driver(self, act, name, mmio, *opts):
        words = [o.text for o in opts]
        vector = None
        if "vector" in words:
            i = words.index("vector")
            if i + 1 >= len(opts):
                raise ExpectFailed(f"line {act.line}: 'vector' needs a number")
            vector = opts[i + 1].int()
        spec = DriverSpec(name.text, mmio.int(), vector, "nodma" not in words)
        self.names[name.text] = EchoDriver(self.machine, spec.mmio, map_dma=spec.map_dma, vector=spec.vector)
        self._done(act)

    def do_request(self, act, name, data):
        out = self._get(name, EchoDriver).request(data.data())
        self.responses[name.text] = out
        self._done(act, repr(out))

    def do_close(self, act, name):
        self._get(name, EchoDriver).close()
        self._done(act)

    # heap, stacks, contexts

    def do_heap(self, act, name, size, align=None):
        obj = heap_alloc(self.machine.mem, TypeTag(size.int(), align.int() if align else 1))
        self.names[name.text] = obj
        self._done(act, hex(obj.addr))

    def do_free(self, act, name):
        self._get(name).free()
        self._done(act)

    def do_stack(self, act, name, frames):
        self.names[name.text] = KernelStack(self.machine.mem, frames.int())
        self._done(act)

    def do_stack_write(self, act, name, off, value):
        self._get(name, KernelStack).write(off.int(), value.int())
        self._done(act)

    def do_stack_read(self, act, name, off):
        self.value = self._get(name, KernelStack).read(off.int())
        self._done(act, hex(self.value))

    def do_context(self, act, name):
        self.names[name.text] = UserContext()
        self._done(act)

    def do_set_flags(self, act, name, value):
        self._get(name, UserContext).set_flags(value.int())
        self._done(act)

    # expectations

    def do_expect(self, act, what, *args):
        got, want = self._observe(act, what.text, args)
        if got != want:
            raise ExpectFailed(f"expect {what.text}: wanted {want!r}, got {got!r}")
        self._done(act, "pass")

    def _observe(self, act, what, args):
        m = self.machine
        if what == "census":
            return m.mem.census(), args[0].int()
        if what == "refcount":
            return m.mem.meta_read(args[0].int()).ref_count, args[1].int()
        if what == "unused":
            return len(m.mem.unused_frames()), args[0].int()
        if what == "error":
            exc, self._pending = self._pending, None
            if exc is None:
                return None, args[0].text
            names = [c.__name__ for c in type(exc).__mro__]
            want = args[0].text
            if not hasattr(errors, want):
                raise ExpectFailed(f"unknown error class {want!r}")
            return (want if want in names else type(exc).__name__), want
        if what == "ok":
            return None, None
        if what == "console":
            return bytes(self.services.syscalls.console), args[0].data()
        if what == "traps":
            return self.services.syscalls.trap_log(args[0].text), [a.text for a in args[1:]]
        if what == "current":
            cur = m.sched.current(args[0].int())
            want = None if args[1].text == "idle" else self._tid(args[1])
            return cur, want
        if what == "guard-violations":
            return len(m.sched.guard_violations()), args[0].int()
        if what == "blocked":
            return len(m.iommu.blocked), args[0].int()
        if what == "delivered":
            return self.irq_counts.get(args[0].text, 0), args[1].int()
        if what == "dropped":
            return len(m.irq.dropped), args[0].int()
        if what == "response":
            return self.responses.get(args[0].text), args[1].data()
        if what == "read":
            return self._get(args[0], Segment).read_bytes(args[1].int(), len(args[2].data())), args[2].data()
        if what == "exited":
            return m.sched.tasks[self._tid(args[0])].exited, True
        if what == "value":
            return self.value, args[0].int()
        if what == "flags":
            return self._get(args[0], UserContext).get_flags(), args[1].int()
        if what == "mapped":
            return len(self._get(args[0], VmSpace)), args[1].int()
        if what == "live":
            return bool(getattr(self._get(args[0]), "is_live", getattr(self._get(args[0]), "live", False))), \
                args[1].text == "true"
        raise ExpectFailed(f"unknown expectation {what!r}")


def run(sc: Scenario, seed: Optional[int] = None, strict_guard: Optional[bool] = None) -> RunResult:
    return Runner(sc, seed, strict_guard).run()
