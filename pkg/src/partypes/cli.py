"""The ``partypes`` command line: check, project, verify, simulate, selftest.

Exit codes: 0 success, 1 verification findings, 2 usage or input error.
Results go to standard output, diagnostics to standard error.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from . import conform, project, simulate, wellformed
from .bindings import BindingsFile
from .core import eval_prop
from .errors import EvalError, ParseError, PreconditionError
from .parser import parse_program_file, parse_protocol_file

OK, FINDINGS, INPUT_ERROR = 0, 1, 2


class _Usage(Exception):
    pass


def corpus_file(name: str) -> str:
    return str(resources.files("partypes") / "corpus" / name)


def _err(msg):
    print(msg, file=sys.stderr)


def _sizes(text):
    try:
        return wellformed.SizeRange.parse(text)
    except ValueError as e:
        raise _Usage(str(e)) from e


def _load_protocol(path):
    try:
        return parse_protocol_file(path)
    except OSError as e:
        raise _Usage(f"cannot read {path}: {e.strerror or e}") from e


def _load_program(path):
    try:
        return parse_program_file(path)
    except OSError as e:
        raise _Usage(f"cannot read {path}: {e.strerror or e}") from e


def _load_bindings(path):
    if path is None:
        return BindingsFile()
    return BindingsFile.load(path)


def _emit_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=False))


# ------------------------------------------------------------------ commands


def cmd_check(args) -> int:
    p = _load_protocol(args.file)
    report = wellformed.check_protocol(p, _sizes(args.sizes))
    if args.format == "json":
        _emit_json(report.to_dict())
    else:
        sys.stdout.write(wellformed.format_report(report))
    for v in report.verdicts:
        for d in v.diagnostics:
            _err(str(d))
    return OK if report.ok else FINDINGS


def _parse_val(text):
    name, sep, raw = text.partition("=")
    if not sep or not name:
        raise _Usage(f"--val expects name=value, got '{text}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError as e:
        raise _Usage(f"bad value for --val {name}: {raw}") from e
    if isinstance(value, list):
        value = tuple(value)
    if isinstance(value, bool) or not isinstance(value, (int, float, tuple)):
        raise _Usage(f"bad value for --val {name}: {raw}")
    return name, value


def cmd_project(args) -> int:
    p = _load_protocol(args.file)
    size = args.size
    if size < 1:
        raise _Usage("--size must be positive")
    try:
        admitted = eval_prop(p.size_prop, {"size": size})
    except EvalError as e:
        raise _Usage(f"cannot evaluate the size proposition: {e}") from e
    if not admitted:
        _err(f"size {size} is excluded by the size proposition of protocol {p.name}")
        return INPUT_ERROR
    if args.rank is not None and not 0 <= args.rank < size:
        raise _Usage(f"--rank {args.rank} is outside 0..{size - 1}")
    env = dict(_parse_val(v) for v in args.val or ())
    ranks = [args.rank] if args.rank is not None else range(size)
    try:
        table = {r: [st.action for st in project.canonical_run(p, size, r, env)] for r in ranks}
    except EvalError as e:
        _err(f"projection failed at size {size}: {e}")
        return FINDINGS
    print(project.format_table(table, args.format), end="" if args.format == "text" else "\n")
    return OK


def cmd_verify(args) -> int:
    prog = _load_program(args.program)
    proto = _load_protocol(args.protocol)
    bf = _load_bindings(args.bindings)
    reports = conform.check_all_sizes(prog, proto, bf, _sizes(args.sizes))
    if args.format == "json":
        _emit_json([r.to_dict() for r in reports])
    else:
        for r in reports:
            sys.stdout.write(conform.format_report(r))
    failed = [r for r in reports if r.verdict == conform.FAIL]
    for r in failed:
        _err(f"size {r.size}: {r.failure}")
    return FINDINGS if failed else OK


def cmd_simulate(args) -> int:
    prog = _load_program(args.program)
    if args.size < 1:
        raise _Usage("--size must be positive")
    b = _load_bindings(args.bindings).for_size(args.size, prog)
    from .bindings import validate

    validate(prog, b)
    hook = None
    if args.trace and args.format == "text":
        def hook(event):
            print(event.describe(), flush=True)

    report = simulate.run(prog, b, hooks=hook)
    if args.format == "json":
        d = report.to_dict()
        if args.trace:
            d["trace"] = list(report.trace)
        _emit_json(d)
    else:
        sys.stdout.write(simulate.format_report(report))
    if report.verdict != "ok" or report.faults:
        return FINDINGS
    return OK


CORPUS = [
    # program, protocol, bindings, sizes, expected conformance, expected simulation
    ("fdiff.mpp", "fdiff.pt", "fdiff.bindings.json", (2, 16), True, "ok"),
    ("fdiff_naive.mpp", "fdiff.pt", "fdiff.bindings.json", (2, 8), False, "deadlock"),
    ("pi.mpp", "pi.pt", "pi.bindings.json", (2, 8), True, "ok"),
    ("dot.mpp", "dot.pt", "dot.bindings.json", (2, 8), True, "ok"),
]


def cmd_selftest(args) -> int:
    failures = 0

    def line(ok, text):
        nonlocal failures
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {text}")

    for name in ("fdiff.pt", "pi.pt", "dot.pt"):
        rep = wellformed.check_protocol(_load_protocol(corpus_file(name)), wellformed.SizeRange(1, 16), infer=False)
        line(rep.ok, f"check {name} over 1..16")
    golden = resources.files("partypes") / "corpus" / "golden" / "fdiff.project5.txt"
    table = project.expansion_table(_load_protocol(corpus_file("fdiff.pt")), 5)
    line(project.format_table(table) == golden.read_text(), "project fdiff.pt at size 5 matches golden")
    for prog_name, proto_name, bind_name, (lo, hi), conforms, sim in CORPUS:
        prog = _load_program(corpus_file(prog_name))
        proto = _load_protocol(corpus_file(proto_name))
        bf = _load_bindings(corpus_file(bind_name))
        reports = conform.check_all_sizes(prog, proto, bf, wellformed.SizeRange(lo, hi))
        got = all(r.passed for r in reports) if conforms else all(r.verdict == conform.FAIL for r in reports)
        line(got, f"verify {prog_name} against {proto_name} over {lo}..{hi}: {'pass' if conforms else 'fail'}")
        verdicts = {simulate.run(prog, bf.for_size(s, prog)).verdict for s in range(lo, hi + 1)}
        line(verdicts == {sim}, f"simulate {prog_name} over {lo}..{hi}: {sim}")
    return OK if failures == 0 else FINDINGS


# ------------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="partypes", description="Protocol checking for SPMD message-passing programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="check a protocol for well-formedness over a range of sizes")
    c.add_argument("file")
    c.add_argument("--sizes", default="1..16")
    c.add_argument("--format", choices=("text", "json"), default="text")
    c.set_defaults(func=cmd_check)

    p = sub.add_parser("project", help="print per-rank projected actions")
    p.add_argument("file")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--rank", type=int)
    p.add_argument("--val", action="append", metavar="NAME=VALUE", help="value for a val-bound variable")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_project)

    v = sub.add_parser("verify", help="check a program against a protocol")
    v.add_argument("program")
    v.add_argument("--protocol", required=True)
    v.add_argument("--sizes", default="1..16")
    v.add_argument("--bindings")
    v.add_argument("--format", choices=("text", "json"), default="text")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="run a program under synchronous communication")
    s.add_argument("program")
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--bindings")
    s.add_argument("--trace", action="store_true")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("selftest", help="run the bundled corpus")
    t.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return OK if e.code == 0 else INPUT_ERROR
    try:
        return args.func(args)
    except ParseError as e:
        for d in e.diagnostics:
            _err(str(d))
        return INPUT_ERROR
    except (PreconditionError, _Usage) as e:
        _err(f"error: {e}")
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
