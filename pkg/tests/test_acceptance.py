"""Acceptance criteria, one test each.  Every test records a PASS/FAIL line
with its wall time; the lines are printed at the end of the pytest run (see
conftest.py) or directly when this file is run as a script."""
import random
import time
from contextlib import contextmanager

import pytest

from partypes import conform as cf
from partypes import core as c
from partypes import generate as gen
from partypes import project as pj
from partypes.bindings import Bindings
from partypes.parser import parse_protocol
from partypes.pretty import pretty_protocol
from partypes.simulate import run, synthesize
from partypes.wellformed import ERROR, OK, SizeRange, check_protocol, infer_min_size

from conftest import CORPUS, bindings, prog, proto, program, wrap
from invariants import completeness_violations, duality_violations

RESULTS = {}


@contextmanager
def criterion(n, title, budget):
    start = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        within = elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        note = "" if within else f" over budget of {budget:g} s"
        RESULTS[n] = f"{status}  criterion {n}: {title} ({elapsed:.2f} s{note})"
    assert within, RESULTS[n]


def p2p(actions):
    return [
        ("send", a.to) if isinstance(a, pj.SendA) else ("recv", a.frm)
        for a in actions
        if isinstance(a, (pj.SendA, pj.RecvA))
    ]


def ring_row(size, r):
    """Literal expansion of the exchange for rank r: messages i -> i-1 and i -> i+1 per i."""
    row = []
    for i in range(size):
        for j in ((i - 1) % size, (i + 1) % size):
            if i == r:
                row.append(("send", j))
            elif j == r:
                row.append(("recv", i))
    return row


def test_1_projection_golden_at_size_5():
    with criterion(1, "fdiff projection at size 5 matches the golden table", 1.0):
        f = proto("fdiff.pt")
        table = pj.expansion_table(f, 5)
        assert pj.format_table(table) == (CORPUS / "golden" / "fdiff.project5.txt").read_text()
        assert p2p(table[0]) == [("send", 4), ("send", 1), ("recv", 1), ("recv", 4)]
        assert p2p(table[1]) == [("recv", 0), ("send", 0), ("send", 2), ("recv", 2)]
        assert p2p(table[3]) == [("recv", 2), ("send", 2), ("send", 4), ("recv", 4)]
        # last rank: literal expansion receives from size-2 at i = size-2
        assert p2p(table[4]) == [("recv", 0), ("recv", 3), ("send", 3), ("send", 0)]
        assert all(p2p(table[r]) == ring_row(5, r) for r in range(5))


def test_2_naive_deadlock():
    f = proto("fdiff.pt")
    naive = prog("fdiff_naive.mpp")
    bf = bindings("fdiff.bindings.json")
    with criterion(2, "naive fdiff deadlocks on a full cycle and fails conformance at sizes 3, 4, 8", 3.0):
        for size in (3, 4, 8):
            t0 = time.perf_counter()
            b = bf.for_size(size, naive)
            report = run(naive, b)
            assert report.deadlocked and report.kind == "cycle"
            assert sorted(r for r, _ in report.wait_for_cycle) == list(range(size))
            conf = cf.check_conformance(naive, f, b)
            assert conf.failure.kind == cf.PROTOCOL_MISMATCH
            assert conf.failure.expected.startswith("recv ")
            assert time.perf_counter() - t0 < 1.0


def test_3_corpus_passes():
    cases = [
        ("fdiff.mpp", "fdiff.pt", "fdiff.bindings.json", SizeRange(2, 16)),
        ("pi.mpp", "pi.pt", "pi.bindings.json", SizeRange(2, 8)),
        ("dot.mpp", "dot.pt", "dot.bindings.json", SizeRange(2, 8)),
    ]
    with criterion(3, "corrected fdiff (2..16), pi and dot (2..8) conform and run deadlock-free", 10.0):
        for prog_name, proto_name, bind_name, sizes in cases:
            p, pr, bf = prog(prog_name), proto(proto_name), bindings(bind_name)
            for r in cf.check_all_sizes(p, pr, bf, sizes):
                assert r.passed, (prog_name, r.size, r.failure)
            for size in sizes:
                report = run(p, bf.for_size(size, p))
                assert report.verdict == "ok" and not report.faults, (prog_name, size)


def test_4_soundness_suite():
    with criterion(4, "200 generated protocols conform and run; 100 mutations never pass and deadlock", 60.0):
        rng = random.Random(20240601)
        for k in range(200):
            size = 2 + k % 5
            p = gen.random_wellformed(rng, size, depth=4)
            assert gen.protocol_depth(p.body) <= 4
            s = synthesize(p, size)
            b = Bindings(size)
            assert cf.check_conformance(s, p, b).passed, pretty_protocol(p)
            assert run(s, b).verdict == "ok", pretty_protocol(p)
        mutations = 0
        attempts = 0
        while mutations < 100:
            attempts += 1
            assert attempts < 5000, "mutation generator exhausted"
            size = 2 + attempts % 5
            p = gen.random_wellformed(rng, size, depth=4)
            m = gen.swap_send_recv(synthesize(p, size), rng)
            if m is None:
                continue
            mutations += 1
            b = Bindings(size)
            passed = cf.check_conformance(m, p, b).passed
            deadlocked = run(m, b).deadlocked
            assert not (passed and deadlocked), str(m)


def test_5_duality_and_completeness():
    with criterion(5, "duality and collective completeness on the corpus at sizes 2..16", 5.0):
        for name in ("fdiff.pt", "pi.pt", "dot.pt"):
            p = proto(name)
            for size in range(2, 17):
                table = pj.expansion_table(p, size)
                assert duality_violations(table) == [], (name, size)
                assert completeness_violations(table) == [], (name, size)


def test_6_round_trip():
    with criterion(6, "500 generated protocols survive parse(pretty(p))", 10.0):
        rng = random.Random(7)
        for _ in range(500):
            p = gen.random_protocol(rng)
            assert parse_protocol(pretty_protocol(p)) == c.normalize_protocol(p)


def test_7_wellformed_boundary():
    with criterion(7, "message 0, size-1 fails only at size 1; fdiff body needs two ranks", 1.0):
        p = wrap("message 0, size-1 float")
        report = check_protocol(p, SizeRange(1, 16), infer=False)
        assert [v.size for v in report.verdicts if v.status == ERROR] == [1]
        assert all(v.status == OK for v in report.verdicts[1:])
        f = proto("fdiff.pt")
        assert infer_min_size(c.Protocol(f.name, c.PTrue(), f.body), SizeRange(1, 16)) == 2


def test_8_refinement_enforcement():
    with criterion(8, "negative apply and bad scatter length raise RefinementViolation naming the refinement", 1.0):
        r = cf.check_conformance(program("apply(-3)"), wrap("val iterations: positive"), Bindings(2))
        assert r.failure.kind == cf.REFINEMENT_VIOLATION
        assert "positive" in r.failure.message and "x >= 1" in r.failure.message

        src = "let n = broadcast(0, 4)\nlet mine = scatter(0, array(6, 1.0))"
        r = cf.check_conformance(program(src), wrap("broadcast 0 n: natural\nscatter 0 float[n]"), Bindings(2))
        assert r.failure.kind == cf.REFINEMENT_VIOLATION
        assert r.failure.rank == 0
        assert "float[n]" in r.failure.message and "length(x) = n" in r.failure.message


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
