import random

import pytest
from hypothesis import given, settings, HealthCheck, strategies as st

from partypes import conform as cf
from partypes import core as c
from partypes import generate as gen
from partypes import project as pj
from partypes.bindings import Bindings
from partypes.errors import ParseError
from partypes.parser import parse_protocol
from partypes.pretty import pretty_protocol
from partypes.simulate import run, synthesize

from conftest import bindings, prog, proto
from invariants import choice_violations, completeness_violations, duality_violations

seeds = st.integers(0, 2**32 - 1)
slow = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_parse_pretty_round_trip(seed):
    p = gen.random_protocol(random.Random(seed))
    assert parse_protocol(pretty_protocol(p)) == c.normalize_protocol(p)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_normalize_idempotent(seed):
    body = gen.random_protocol(random.Random(seed)).body
    once = c.normalize(body)
    assert c.normalize(once) == once


@settings(max_examples=100, deadline=None)
@given(seeds, st.data())
def test_parse_diagnostics_point_into_text(seed, data):
    text = pretty_protocol(gen.random_protocol(random.Random(seed)))
    k = data.draw(st.integers(0, max(0, len(text) - 1)))
    broken = text[:k] + data.draw(st.sampled_from(["", "$", "{", ")", "message", "rank"])) + text[k + 1:]
    try:
        parse_protocol(broken)
    except ParseError as e:
        lines = broken.replace("\r\n", "\n").split("\n")
        assert e.diagnostics
        for d in e.diagnostics:
            assert 1 <= d.span.start_line <= len(lines)
            assert 1 <= d.span.start_col <= len(lines[d.span.start_line - 1]) + 1


@slow
@given(seeds, st.integers(2, 6))
def test_projection_invariants_on_generated_protocols(seed, size):
    p = gen.random_wellformed(random.Random(seed), size)
    table = pj.expansion_table(p, size)
    assert duality_violations(table) == []
    assert completeness_violations(table) == []
    assert choice_violations(table) == []


@slow
@given(seeds, st.integers(2, 6))
def test_soundness_on_generated_protocols(seed, size):
    """A synthesized program conforms, and conforming programs do not deadlock."""
    p = gen.random_wellformed(random.Random(seed), size, depth=4)
    s = synthesize(p, size)
    b = Bindings(size)
    assert cf.check_conformance(s, p, b).passed
    assert run(s, b).verdict == "ok"


@slow
@given(seeds, st.integers(2, 6))
def test_mutations_never_pass_and_deadlock(seed, size):
    rng = random.Random(seed)
    for _ in range(40):
        p = gen.random_wellformed(rng, size, depth=4)
        mutated = gen.swap_send_recv(synthesize(p, size), rng)
        if mutated is not None:
            break
    else:
        return  # nothing to swap within the attempts
    b = Bindings(size)
    if cf.check_conformance(mutated, p, b).passed:
        assert run(mutated, b).verdict == "ok"


CORPUS_RUNS = [
    ("fdiff.mpp", "fdiff.bindings.json", range(2, 9)),
    ("fdiff_naive.mpp", "fdiff.bindings.json", range(2, 6)),
    ("pi.mpp", "pi.bindings.json", range(1, 7)),
    ("dot.mpp", "dot.bindings.json", range(1, 7)),
]


@pytest.mark.parametrize("name, bind, sizes", CORPUS_RUNS)
def test_random_schedules_agree(name, bind, sizes):
    """Without wildcard receives, every schedule reaches the same outcome."""
    p = prog(name)
    bf = bindings(bind)
    for size in sizes:
        b = bf.for_size(size, p)
        ref = run(p, b)
        final = [dict(st.env.maps[0]) if st.env is not None else None for st in ref.final_states]
        for seed in range(100 // len(sizes) + 1):
            other = run(p, b, seed=seed)
            assert other.verdict == ref.verdict
            assert other.steps_executed == ref.steps_executed
            if ref.verdict == "ok":
                assert [dict(st.env.maps[0]) for st in other.final_states] == final


@pytest.mark.parametrize("name, bind, sizes", CORPUS_RUNS)
def test_simulation_is_deterministic(name, bind, sizes):
    p = prog(name)
    b = bindings(bind).for_size(sizes[-1], p)
    a, z = run(p, b), run(p, b)
    assert a.to_dict() == z.to_dict()
    assert a.trace == z.trace


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(1, 4))
def test_fdiff_projection_totality(size, iterations):
    f = proto("fdiff.pt")
    table = pj.expansion_table(f, size, {"iterations": iterations})
    assert all(len([a for a in acts if isinstance(a, (pj.SendA, pj.RecvA))]) == 4 * iterations for acts in table.values())
