from collections import ChainMap

import pytest
from hypothesis import given, settings, strategies as st

from partypes import conform as cf
from partypes import program as pg
from partypes.bindings import Bindings
from partypes.errors import PreconditionError
from partypes.simulate import run
from partypes.wellformed import SizeRange

from conftest import bindings, prog, proto, program, wrap


def check(text_prog, text_proto, size, values=None, header="true"):
    return cf.check_conformance(program(text_prog), wrap(text_proto, header), Bindings(size, values or {}))


def fdiff_bindings(size, iterations=2, per_rank=3):
    return Bindings(size, {"iterations": iterations, "inputVector": tuple(float(i % 7) for i in range(per_rank * size))})


class TestSingleSize:
    def test_corrected_fdiff(self, fdiff, fdiff_prog):
        r = cf.check_conformance(fdiff_prog, fdiff, fdiff_bindings(3))
        assert r.passed, r.failure
        assert r.collective_log[0] == "step 1: collective apply"

    def test_naive_fdiff(self, fdiff, naive_prog):
        r = cf.check_conformance(naive_prog, fdiff, fdiff_bindings(3))
        assert r.verdict == cf.FAIL
        f = r.failure
        assert (f.rank, f.kind) == (1, cf.PROTOCOL_MISMATCH)
        assert f.expected == "recv 0 : float"
        assert f.offered == "send 0"
        assert f.span is not None and f.span.start_line == 15

    def test_nothing_against_skip(self):
        assert check("", "", 2).passed

    def test_residual(self):
        r = check("", "message 0, 1 float", 2)
        assert r.failure.kind == cf.RESIDUAL_NOT_SKIP
        assert r.failure.rank == 0
        assert r.failure.expected == "send 1 : float"

    def test_extra_communication(self):
        r = check("if (rank = 0) { send(1, 1.0) } else { let x = recv(0) }", "", 2)
        assert r.failure.kind == cf.PROTOCOL_MISMATCH
        assert r.failure.expected == "end of protocol"

    def test_invalid_destination(self):
        r = check("if (rank = 0) { send(size, 1.0) }", "message 0, 1 float", 2)
        assert r.failure.kind == cf.PROTOCOL_MISMATCH
        assert "invalid destination 2" in r.failure.message

    def test_send_to_self(self):
        r = check("if (rank = 0) { send(0, 1.0) }", "message 0, 1 float", 2)
        assert "invalid destination 0" in r.failure.message

    def test_apply_disagreement(self):
        r = check("apply(rank)", "val k: integer", 2)
        assert r.failure.kind == cf.VAL_DISAGREEMENT
        assert r.failure.rank == 1

    def test_apply_refinement(self):
        r = check("apply(-1)", "val iterations: positive", 2)
        assert r.failure.kind == cf.REFINEMENT_VIOLATION
        assert "{x: integer | x >= 1}" in r.failure.message

    def test_symmetric_apply(self):
        assert check("if (rank = 0) { apply(100) } else { apply(100) }", "val k: positive", 2).passed

    def test_sent_value_checked(self):
        r = check("if (rank = 0) { send(1, -3) } else { let x = recv(0) }", "message 0, 1 natural", 2)
        assert (r.failure.kind, r.failure.rank) == (cf.REFINEMENT_VIOLATION, 0)

    def test_received_value_uses_receiver_env(self):
        # the payload mentions a variable bound by a broadcast
        src = """
        let n = broadcast(0, 3)
        if (rank = 0) { send(1, array(n, 0.0)) } else { let x = recv(0) }
        """
        assert check(src, "broadcast 0 n: natural\nmessage 0, 1 float[n]", 2).passed

    def test_root_disagreement(self):
        r = check("let x = broadcast(rank, 1)", "broadcast 0 n: integer", 2)
        assert r.failure.kind == cf.PROTOCOL_MISMATCH
        assert r.failure.rank == 1
        assert r.failure.offered == "broadcast 1"

    def test_op_disagreement(self):
        r = check("let x = reduce(0, min, 1)", "reduce 0 max integer", 2)
        assert r.failure.offered == "reduce 0 min"

    def test_ragged_scatter(self):
        src = "let n = broadcast(0, 5)\nlet mine = scatter(0, array(5, 1.0))"
        r = check(src, "broadcast 0 n: natural\nscatter 0 float[n]", 2)
        assert (r.failure.kind, r.failure.rank) == (cf.REFINEMENT_VIOLATION, 0)
        assert "not divisible" in r.failure.message

    def test_scatter_length_names_refinement(self):
        src = "let n = broadcast(0, 4)\nlet mine = scatter(0, array(6, 1.0))"
        r = check(src, "broadcast 0 n: natural\nscatter 0 float[n]", 2)
        assert r.failure.kind == cf.REFINEMENT_VIOLATION
        assert "length(x) = n" in r.failure.message

    def test_scalar_scatter(self):
        src = "let mine = scatter(0, [1, 2, 3])"
        assert check(src, "scatter 0 natural", 3).passed
        assert check("let mine = scatter(0, [1, -2, 3])", "scatter 0 natural", 3).failure.kind == cf.REFINEMENT_VIOLATION

    def test_gather_whole_array(self):
        src = "let g = gather(1, [float(rank), 0.5])"
        assert check(src, "gather 1 float[2 * size]", 3).passed
        assert check(src, "gather 1 float[size]", 3).failure.kind == cf.REFINEMENT_VIOLATION

    def test_allgather_binds_whole(self):
        src = "let g = allgather(rank % 2 + 1)\nif (rank = 0) { send(g[2], 1.0) }\nif (rank = 1) { let y = recv(0) }"
        assert check(src, "allgather g: {x: integer | x >= 1 and x <= 2}\nmessage 0, g[2] float", 3).passed

    def test_allreduce_value_checked(self):
        assert check("let s = allreduce(sum, rank)", "allreduce sum s: natural", 3).passed
        r = check("let s = allreduce(sum, 1 - rank)", "allreduce sum s: natural", 3)
        assert (r.failure.kind, r.failure.rank) == (cf.REFINEMENT_VIOLATION, 2)

    def test_choice_without_markers(self):
        proto_text = "val k: natural\nif (k > 0) { message 0, 1 float } else { message 1, 0 float }"
        src = """
        extern k: natural
        apply(k)
        if (k > 0) {
          if (rank = 0) { send(1, 1.0) } else { let x = recv(0) }
        } else {
          if (rank = 1) { send(0, 1.0) } else { let x = recv(1) }
        }
        """
        assert check(src, proto_text, 2, {"k": 0}).passed
        assert check(src, proto_text, 2, {"k": 4}).passed
        wrong = src.replace("if (k > 0) {", "if (k >= 0) {")
        assert check(wrong, proto_text, 2, {"k": 0}).failure.kind == cf.PROTOCOL_MISMATCH

    def test_runtime_error(self):
        r = check("let z = 1 / (rank - 1)", "", 3)
        assert (r.failure.kind, r.failure.rank) == (cf.RUNTIME_ERROR, 1)
        assert r.failure.span is not None

    def test_budget(self):
        src = "for i in 1 .. 50 { if (rank = 0) { send(1, 1.0) } else { let x = recv(0) } }"
        r = cf.check_conformance(program(src), wrap("foreach i: 1 .. 50 { message 0, 1 float }"), Bindings(2), max_steps=10)
        assert r.failure.kind == cf.RUNTIME_ERROR
        assert "budget" in r.failure.message

    def test_ill_formed_protocol_is_a_precondition_error(self):
        with pytest.raises(PreconditionError):
            check("", "message 0, 0 float", 2)

    def test_excluded_size_is_a_precondition_error(self):
        with pytest.raises(PreconditionError):
            check("", "", 1, header="size >= 2")

    def test_missing_extern(self):
        with pytest.raises(PreconditionError):
            cf.check_conformance(program("extern q: integer"), wrap(""), Bindings(2))

    def test_extern_type_checked(self):
        with pytest.raises(PreconditionError):
            cf.check_conformance(program("extern q: positive"), wrap(""), Bindings(2, {"q": 0}))


class TestAllSizes:
    def test_fdiff_excludes_one(self, fdiff, fdiff_prog):
        reports = cf.check_all_sizes(fdiff_prog, fdiff, bindings("fdiff.bindings.json"), SizeRange(1, 8))
        assert [r.size for r in reports] == list(range(1, 9))
        assert reports[0].verdict == cf.EXCLUDED
        assert all(r.passed for r in reports[1:])

    def test_pi(self):
        reports = cf.check_all_sizes(prog("pi.mpp"), proto("pi.pt"), bindings("pi.bindings.json"), SizeRange(2, 8))
        assert all(r.passed for r in reports)

    def test_naive_fails_everywhere(self, fdiff, naive_prog):
        reports = cf.check_all_sizes(naive_prog, fdiff, bindings("fdiff.bindings.json"), SizeRange(2, 8))
        assert all(r.verdict == cf.FAIL for r in reports)
        assert {r.failure.kind for r in reports} == {cf.PROTOCOL_MISMATCH}

    def test_callable_bindings(self, fdiff, fdiff_prog):
        reports = cf.check_all_sizes(fdiff_prog, fdiff, fdiff_bindings, SizeRange(2, 4))
        assert all(r.passed for r in reports)


class TestInterpreter:
    def _env(self, rank=0, size=2):
        return pg.rank_env(rank, size, {})

    def test_let(self):
        env = self._env()
        list(pg.eval_stmt(program("let x = 2 + 3").body[0], env))
        assert env["x"] == 5

    @pytest.mark.parametrize("rank", [0, 1])
    def test_symmetric_apply(self, rank):
        s = program("if (rank = 0) { apply(100) } else { apply(100) }").body[0]
        offers = list(pg.eval_stmt(s, self._env(rank)))
        assert offers == [pg.Pending("apply", value=100)]

    def test_empty_loop(self):
        s = program("for i in 1 .. 0 { send(0, i) }").body[0]
        assert list(pg.eval_stmt(s, self._env())) == []

    def test_bounds_checked(self):
        env = self._env()
        with pytest.raises(pg.ProgramError):
            list(pg.eval_block(program("let a = [1, 2]\nlet b = a[2]").body, env))

    def test_division_by_zero(self):
        with pytest.raises(pg.ProgramError):
            list(pg.eval_stmt(program("let a = 1 / 0").body[0], self._env()))

    def test_euclidean_arithmetic_matches_core(self):
        env = self._env()
        list(pg.eval_block(program("let a = -7 / 2\nlet b = -7 % 2\nlet c = (0 - 1) % 5").body, env))
        assert (env["a"], env["b"], env["c"]) == (-4, 1, 4)

    def test_scopes(self):
        env = self._env()
        list(pg.eval_block(program("let a = 1\nif (true) { let b = 2\n a = b }").body, env))
        assert env["a"] == 2 and "b" not in env

    def test_suspends_on_communication(self):
        gen = pg.eval_stmt(program("let x = recv(1)").body[0], env := self._env())
        assert next(gen) == pg.Pending("recv", peer=1)
        with pytest.raises(StopIteration):
            gen.send(4.5)
        assert env["x"] == 4.5


def test_reports_are_deterministic(fdiff, naive_prog, fdiff_prog):
    for p in (fdiff_prog, naive_prog):
        a = cf.check_conformance(p, fdiff, fdiff_bindings(4)).to_dict()
        b = cf.check_conformance(p, fdiff, fdiff_bindings(4)).to_dict()
        assert a == b


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["fdiff.mpp", "fdiff_naive.mpp"]), st.integers(2, 6), st.integers(-3, 3))
def test_frame_property(name, size, k):
    """A trailing pure statement never changes the verdict."""
    p = prog(name)
    framed = pg.Program(p.externs, p.body + (pg.Let("zz", pg.Binary("+", pg.Num(k), pg.Var("size"))),))
    b = fdiff_bindings(size)
    fd = proto("fdiff.pt")
    assert cf.check_conformance(framed, fd, b).verdict == cf.check_conformance(p, fd, b).verdict


@settings(max_examples=60, deadline=None)
@given(
    st.one_of(st.floats(allow_nan=True, allow_infinity=True), st.integers(-(2**63), 2**63 - 1)),
    st.integers(2, 5),
    st.data(),
)
def test_broadcast_value_law(v, size, data):
    root = data.draw(st.integers(0, size - 1))
    kind = "float" if isinstance(v, float) else "integer"
    proto_ = wrap(f"broadcast {root} x: {kind}")
    src = program(f"extern v: {kind}\nlet x = broadcast({root}, v)")
    b = Bindings(size, {"v": v})
    assert cf.check_conformance(src, proto_, b).passed
    report = run(src, b)
    import math

    for stt in report.final_states:
        got = stt.env["x"]
        if isinstance(v, float):
            assert math.copysign(1.0, got) == math.copysign(1.0, v)
            assert (got == v) or (got != got and v != v)
        else:
            assert got == v
        assert isinstance(stt.env, ChainMap)
