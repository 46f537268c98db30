import json
import shutil
import subprocess

import jsonschema
import pytest

from partypes.cli import FINDINGS, INPUT_ERROR, OK, main

from conftest import CORPUS, corpus, schema


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def as_json(capsys, schema_name, *argv):
    code, out, _ = call(capsys, *argv, "--format", "json")
    data = json.loads(out)
    jsonschema.validate(data, schema(schema_name))
    return code, data


@pytest.fixture
def selfmsg(tmp_path):
    f = tmp_path / "self.pt"
    f.write_text("protocol Bad (true) {\n  message 0, 0 float\n}\n")
    return f


class TestCheck:
    def test_fdiff(self, capsys):
        code, out, _ = call(capsys, "check", corpus("fdiff.pt"), "--sizes", "1..8")
        assert code == OK
        assert "size 1: excluded-by-precondition" in out
        assert "size 8: ok" in out

    def test_self_message(self, capsys, selfmsg):
        code, _, err = call(capsys, "check", selfmsg)
        assert code == FINDINGS
        assert "self-message" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = call(capsys, "check", tmp_path / "nope.pt")
        assert code == INPUT_ERROR
        assert "cannot read" in err

    def test_parse_error(self, capsys, tmp_path):
        f = tmp_path / "broken.pt"
        f.write_text("protocol P (true) { message 0 1 float }")
        code, _, err = call(capsys, "check", f)
        assert code == INPUT_ERROR
        assert "syntax-error" in err

    def test_bad_sizes(self, capsys):
        assert call(capsys, "check", corpus("fdiff.pt"), "--sizes", "4..2")[0] == INPUT_ERROR

    def test_json(self, capsys):
        code, data = as_json(capsys, "check", "check", corpus("fdiff.pt"))
        assert code == OK
        assert data["inferredMinSize"] == 2
        assert data["checkedSizes"] == list(range(1, 17))


class TestProject:
    def test_golden(self, capsys):
        code, out, _ = call(capsys, "project", corpus("fdiff.pt"), "--size", 5)
        assert code == OK
        assert out == (CORPUS / "golden" / "fdiff.project5.txt").read_text()

    def test_single_rank(self, capsys):
        code, out, _ = call(capsys, "project", corpus("fdiff.pt"), "--size", 5, "--rank", 0)
        assert out.startswith("rank 0:")
        assert "rank 1:" not in out

    def test_excluded_size(self, capsys):
        code, _, err = call(capsys, "project", corpus("fdiff.pt"), "--size", 1)
        assert code == INPUT_ERROR
        assert "excluded" in err

    def test_val_values(self, capsys):
        code, out, _ = call(capsys, "project", corpus("fdiff.pt"), "--size", 2, "--rank", 1, "--val", "iterations=3")
        assert out.count("recv 0 : float") == 6

    def test_bad_rank(self, capsys):
        assert call(capsys, "project", corpus("fdiff.pt"), "--size", 3, "--rank", 3)[0] == INPUT_ERROR

    def test_evaluation_failure(self, capsys, tmp_path):
        f = tmp_path / "p.pt"
        f.write_text("protocol P (true) { message 0, 3 float }")
        assert call(capsys, "project", f, "--size", 2)[0] == FINDINGS

    def test_json(self, capsys):
        code, data = as_json(capsys, "project", "project", corpus("fdiff.pt"), "--size", 3)
        assert [r["rank"] for r in data["ranks"]] == [0, 1, 2]
        assert data["ranks"][0]["actions"][3] == {"kind": "send", "to": 2, "payload": "float"}


def verify(*extra, prog="fdiff.mpp"):
    return ["verify", corpus(prog), "--protocol", corpus("fdiff.pt"), "--bindings", corpus("fdiff.bindings.json"), *extra]


class TestVerify:
    def test_corrected(self, capsys):
        code, out, _ = call(capsys, *verify("--sizes", "1..6"))
        assert code == OK
        assert "size 1: excluded" in out

    def test_naive(self, capsys):
        code, out, err = call(capsys, *verify("--sizes", "3..3", prog="fdiff_naive.mpp"))
        assert code == FINDINGS
        assert "ProtocolMismatch" in out
        assert "expected: recv 0 : float" in out
        assert "offered:  send 0" in out
        assert "rank 1" in err

    def test_missing_extern(self, capsys, tmp_path):
        b = tmp_path / "b.json"
        b.write_text(json.dumps({"size-defaults": {"iterations": 2}}))
        code, _, err = call(capsys, "verify", corpus("fdiff.mpp"), "--protocol", corpus("fdiff.pt"), "--bindings", b)
        assert code == INPUT_ERROR
        assert "inputVector" in err

    def test_malformed_bindings(self, capsys, tmp_path):
        b = tmp_path / "b.json"
        b.write_text("{not json")
        assert call(capsys, *verify()[:4], "--bindings", b)[0] == INPUT_ERROR

    def test_json(self, capsys):
        code, data = as_json(capsys, "verify", *verify("--sizes", "2..3", prog="fdiff_naive.mpp"))
        assert code == FINDINGS
        assert data[0]["failure"]["kind"] == "ProtocolMismatch"


def simulate(prog, *extra):
    return ["simulate", corpus(prog), "--bindings", corpus("fdiff.bindings.json"), *extra]


class TestSimulate:
    def test_naive(self, capsys):
        code, out, _ = call(capsys, *simulate("fdiff_naive.mpp", "--size", 3))
        assert code == FINDINGS
        assert "deadlock" in out
        assert "0 -> 2" in out or "send -> 2" in out

    def test_corrected(self, capsys):
        assert call(capsys, *simulate("fdiff.mpp", "--size", 3))[0] == OK

    def test_trace(self, capsys):
        code, out, _ = call(capsys, *simulate("fdiff.mpp", "--size", 2, "--trace"))
        lines = out.splitlines()
        assert lines[0] == "step 1: collective broadcast root 0"
        assert any(line.startswith("step 3: 0 -> 1 : float(") for line in lines)

    def test_budget_env(self, capsys, monkeypatch):
        monkeypatch.setenv("PARTYPES_MAX_STEPS", "2")
        code, out, _ = call(capsys, *simulate("fdiff.mpp", "--size", 3))
        assert code == FINDINGS
        assert "budget" in out

    def test_json(self, capsys):
        code, data = as_json(capsys, "simulate", *simulate("fdiff_naive.mpp", "--size", 4, "--trace"))
        assert data["deadlocked"]
        assert [e["rank"] for e in data["waitForCycle"]] == [0, 3, 2, 1]

    def test_missing_bindings(self, capsys):
        assert call(capsys, "simulate", corpus("fdiff.mpp"), "--size", 3)[0] == INPUT_ERROR


def test_selftest(capsys):
    code, out, _ = call(capsys, "selftest")
    assert code == OK
    assert out.count("PASS") == len(out.splitlines())


def test_usage_errors(capsys):
    assert main([]) == INPUT_ERROR
    assert main(["frobnicate"]) == INPUT_ERROR
    assert main(["project", corpus("fdiff.pt")]) == INPUT_ERROR
    capsys.readouterr()


def test_outputs_are_deterministic(capsys):
    runs = [call(capsys, *verify("--sizes", "2..4", "--format", "json", prog="fdiff_naive.mpp")) for _ in range(2)]
    assert runs[0] == runs[1]


@pytest.mark.skipif(shutil.which("partypes") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["partypes", "check", corpus("pi.pt"), "--sizes", "1..4"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "size 4: ok" in r.stdout
