import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from framekernel import scenario
from framekernel.cli import main
from framekernel.errors import ParseError

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = sorted((ROOT / "scenarios").glob("*.fk"))
TRACES = ROOT / "traces"


def fk(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParse:
    @pytest.mark.parametrize("text,line,col", [
        ("[actions]\nfrobnicate 1\n", 2, 1),
        ("[config]\nframe_count = x\n", 2, 15),
        ("[nonsense]\n", 1, 1),
        ("[actions]\nrequest d0 \"abc\n", 2, 12),
        ("[actions]\nexpect census\n", 2, 8),
    ])
    def test_errors_carry_position(self, text, line, col):
        with pytest.raises(ParseError) as ei:
            scenario.parse(text)
        assert (ei.value.line, ei.value.column) == (line, col)

    def test_comments_and_blank_lines(self):
        sc = scenario.parse("# only a comment\n\n[actions]\n# nothing\n")
        assert sc.actions == []

    def test_cli_reports_position(self, capsys, tmp_path):
        bad = tmp_path / "bad.fk"
        bad.write_text("[actions]\n\n\n\nfrobnicate\n")
        code, _, err = fk(capsys, "run", bad)
        assert code == 2 and err.strip() == f"error: {bad}:5:1: unknown action 'frobnicate'"

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = fk(capsys, "run", tmp_path / "nope.fk")
        assert code == 2 and err.startswith("error:")


class TestRun:
    def test_empty(self, capsys):
        code, out, _ = fk(capsys, "run", ROOT / "scenarios" / "empty.fk")
        assert code == 0 and out.strip().endswith("PASS")

    @pytest.mark.parametrize("path", SCENARIOS, ids=[p.stem for p in SCENARIOS])
    def test_bundled_scenarios_pass(self, path):
        res = scenario.run(scenario.load(path))
        assert res.ok, res.failures

    def test_failed_expectation_exits_1(self, capsys, tmp_path):
        f = tmp_path / "f.fk"
        f.write_text("[actions]\nexpect census 3\n")
        code, out, _ = fk(capsys, "run", f)
        assert code == 1 and "FAIL" in out

    def test_seed_determinism(self, capsys, monkeypatch):
        path = ROOT / "scenarios" / "dma_fuzz.fk"
        a = fk(capsys, "run", path, "--seed", 3)
        b = fk(capsys, "run", path, "--seed", 3)
        monkeypatch.setenv("FK_SEED", "3")
        c = fk(capsys, "run", path)
        assert a == b == c and a[0] == 0

    def test_flag_beats_environment(self, capsys, monkeypatch):
        path = ROOT / "scenarios" / "dma_fuzz.fk"
        a = fk(capsys, "run", path, "--seed", 5)
        monkeypatch.setenv("FK_SEED", "9")
        assert fk(capsys, "run", path, "--seed", 5) == a


class TestBench:
    def test_csv(self, capsys):
        code, out, _ = fk(capsys, "bench", "--filter", "yield|heap", "--iters", 2000, "--csv", "-")
        assert code == 0
        text = out[out.index("op,"):]
        rows = list(csv.DictReader(io.StringIO(text)))
        assert rows and list(rows[0]) == ["op", "checked_ns", "unchecked_ns", "ratio"]
        for r in rows:
            checked, unchecked = float(r["checked_ns"]), float(r["unchecked_ns"])
            assert abs(float(r["ratio"]) - (checked - unchecked) / checked) < 1e-3
            assert unchecked > 0


class TestSnapshot:
    def test_dump_load_dump(self, capsys, tmp_path):
        a, b = tmp_path / "a.snap", tmp_path / "b.snap"
        path = ROOT / "scenarios" / "census_100.fk"
        assert fk(capsys, "snapshot", "dump", path, a)[0] == 0
        assert fk(capsys, "snapshot", "dump", path, b)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        code, out, _ = fk(capsys, "snapshot", "diff", a, b)
        assert code == 0 and out.strip().endswith("0 frame(s) differ")

    def test_diff_shows_changes(self, capsys, tmp_path):
        a, b = tmp_path / "a.snap", tmp_path / "b.snap"
        base = tmp_path / "base.fk"
        base.write_text("[config]\nframe_count = 16\nheap = off\n[actions]\n")
        other = tmp_path / "one.fk"
        other.write_text("[config]\nframe_count = 16\nheap = off\n[actions]\nclaim h 0x3000 1\n")
        fk(capsys, "snapshot", "dump", base, a)
        fk(capsys, "snapshot", "dump", other, b)
        code, out, _ = fk(capsys, "snapshot", "diff", a, b)
        assert code == 0 and out.strip().endswith("1 frame(s) differ")

    def test_garbage(self, capsys, tmp_path):
        junk = tmp_path / "junk"
        junk.write_bytes(b"not a snapshot")
        code, _, err = fk(capsys, "snapshot", "diff", junk, junk)
        assert code == 2 and "SnapshotError" in err


class TestOracleCli:
    @pytest.mark.parametrize("name,code,kind", [
        ("metadata_race_flawed", 1, "DataRace"),
        ("metadata_race_fixed", 0, None),
        ("heap_mutability_flawed", 1, "MutabilityViolation"),
        ("heap_mutability_fixed", 0, None),
    ])
    def test_bundled_traces(self, capsys, name, code, kind):
        got, out, _ = fk(capsys, "oracle", "--trace", TRACES / f"{name}.trace")
        assert got == code
        records = [json.loads(l) for l in out.splitlines() if l.startswith("{")]
        if kind is None:
            assert records == []
        else:
            assert len(records) == 1 and records[0]["kind"] == kind and records[0]["schedule"]

    def test_exhaustive_refuses_large(self, capsys, tmp_path):
        t = tmp_path / "big.trace"
        t.write_text("".join(f"{i % 2} MetaCAS 1\n" for i in range(14)))
        assert fk(capsys, "oracle", "--trace", t, "--exhaustive")[0] == 2
        code, out, _ = fk(capsys, "oracle", "--trace", t)
        assert code == 0 and "sampled" in out

    @pytest.mark.parametrize("path", SCENARIOS, ids=[p.stem for p in SCENARIOS])
    def test_attach_is_clean(self, capsys, path):
        code, out, _ = fk(capsys, "oracle", "--attach", path)
        assert code == 0 and "scenario passed" in out and out.strip().endswith("0 violation(s)")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "framekernel", "run", str(ROOT / "scenarios" / "empty.fk")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "PASS" in proc.stdout
