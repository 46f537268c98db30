import pytest

from partypes import core as c
from partypes.wellformed import (
    ERROR,
    EXCLUDED,
    OK,
    SizeRange,
    check_protocol,
    check_size,
    infer_min_size,
)

from conftest import wrap


def statuses(p, lo=1, hi=16):
    return {v.size: v.status for v in check_protocol(p, SizeRange(lo, hi), infer=False).verdicts}


def error_codes(p, size):
    return {d.code for d in check_size(p, size).diagnostics if d.severity == "error"}


def test_fdiff_sizes(fdiff):
    report = check_protocol(fdiff, SizeRange(1, 16))
    assert report.checked_sizes == list(range(1, 17))
    assert report.verdict(1).status == EXCLUDED
    assert all(report.verdict(s).status == OK for s in range(2, 17))
    assert report.ok
    assert report.inferred_min_size == 2


def test_self_message_everywhere():
    p = wrap("message 0, 0 float")
    assert set(statuses(p).values()) == {ERROR}
    assert error_codes(p, 3) == {"self-message"}


def test_last_rank_boundary():
    # literal oracle: the message is from 0 to size-1, a self-message only when size = 1
    p = wrap("message 0, size-1 float")
    expected = {s: (ERROR if 0 == s - 1 else OK) for s in range(1, 17)}
    assert statuses(p) == expected


def test_infer_fdiff_body(fdiff):
    open_body = c.Protocol(fdiff.name, c.PTrue(), fdiff.body)
    assert infer_min_size(open_body, SizeRange(1, 16)) == 2


def test_infer_skip():
    assert infer_min_size(wrap(""), SizeRange()) == 1


def test_infer_from_rank_two():
    p = wrap("message 2, 0 integer")
    oracle = min(s for s in range(1, 17) if all(2 < t for t in range(s, 17)))
    assert infer_min_size(p, SizeRange()) == oracle == 3


def test_infer_none_when_largest_size_fails():
    assert infer_min_size(wrap("message 0, 99 float"), SizeRange(1, 8)) is None


def test_non_monotone_sizes_reported_independently():
    p = wrap("message 0, 5 % size float")
    got = statuses(p, 2, 7)
    assert got[4] == OK
    assert got[5] == ERROR
    assert got[6] == OK


def test_empty_body_ok_everywhere():
    assert set(statuses(wrap("", header="size >= 3")).values()) == {OK, EXCLUDED}
    assert statuses(wrap(""))[1] == OK


def test_excluded_is_not_error():
    p = wrap("message 0, 1 float", header="size >= 2")
    rep = check_protocol(p, SizeRange(1, 3))
    assert rep.verdict(1).status == EXCLUDED
    assert rep.verdict(1).diagnostics == []
    assert rep.ok


def test_root_out_of_range():
    assert error_codes(wrap("reduce size sum float"), 4) == {"root-out-of-range"}


def test_witness_boundary_catches_large_value():
    p = wrap("val k: {x: integer | x >= 1}\nmessage 0, k float")
    diags = check_size(p, 4).diagnostics
    assert {d.code for d in diags} == {"rank-out-of-range"}


def test_bounded_value_stays_in_range():
    p = wrap("val k: {x: natural | x <= 2}\nmessage 3, k float")
    assert check_size(p, 4).status == OK
    assert check_size(p, 3).status == ERROR


def test_empty_range_is_a_no_op():
    assert check_size(wrap("foreach i: 1 .. 0 { message 0, 0 float }"), 2).status == OK


def test_range_too_large():
    assert error_codes(wrap("foreach i: 0 .. 200000 { message 0, 1 float }"), 2) == {"range-too-large"}


def test_choice_condition_must_evaluate():
    assert error_codes(wrap("if (1 / (size - 2) = 0) { } else { }"), 2) == {"eval-error"}
    assert check_size(wrap("if (1 / (size - 2) = 0) { } else { }"), 3).status == OK


def test_array_length_must_evaluate():
    assert error_codes(wrap("scatter 0 float[1 / (size - 2)]"), 2) == {"eval-error"}


def test_unsatisfiable_refinement_is_a_warning():
    v = check_size(wrap("val k: {x: integer | x < x}"), 2)
    assert v.status == OK
    assert [d.code for d in v.diagnostics] == ["empty-type"]
    assert v.diagnostics[0].severity == "warning"


def test_choice_branch_depends_on_size():
    p = wrap("if (size >= 3) { message 0, 2 float } else { message 0, 1 float }")
    assert set(statuses(p, 2, 8).values()) == {OK}


def test_diagnostics_carry_spans():
    p = wrap("message 0, 0 float")
    d = check_size(p, 2).diagnostics[0]
    assert d.span is not None and d.span.start_line == 2


def test_size_range():
    assert list(SizeRange(2, 4)) == [2, 3, 4]
    assert SizeRange.parse("3..5") == SizeRange(3, 5)
    assert SizeRange.parse("7") == SizeRange(7, 7)
    for bad in ("0..3", "5..2", "a..b"):
        with pytest.raises(ValueError):
            SizeRange.parse(bad)
