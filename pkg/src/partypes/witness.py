"""Concrete inhabitants of datatypes.

Two consumers: the bounded well-formedness checker wants a few boundary
values per refinement, and projection/synthesis want one canonical value.
Integer refinements are decided for the whole scan range at once with numpy.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .core import (
    And,
    ArrayT,
    BinOp,
    Cmp,
    FloatT,
    IntegerT,
    Length,
    Not,
    Or,
    PTrue,
    Refinement,
    Var,
    check_value,
    eval_index,
    free_vars,
    is_array,
    is_float,
    is_int,
)
from .errors import CheckError, EvalError, TypeMismatch

SCAN_LO = -(2**16)
SCAN_HI = 2**16
MAX_SCAN_LENGTH = 64

_SCAN = np.arange(SCAN_LO, SCAN_HI + 1, dtype=np.int64)


class NoWitness(EvalError):
    pass


class _NotVectorizable(Exception):
    pass


class _VecEval:
    """Evaluates a proposition for every candidate of one integer variable.

    Each node yields ``(value, bad)`` where ``bad`` marks candidates whose
    scalar evaluation would have raised; connectives short-circuit like the
    scalar evaluator does.
    """

    def __init__(self, var, xs, env):
        self.var = var
        self.xs = xs
        self.env = env
        self.n = len(xs)

    def _full(self, v):
        return np.full(self.n, v)

    def term(self, t):
        if self.var not in free_vars(t):
            v = eval_index(t, self.env)
            if not is_int(v):
                raise _NotVectorizable
            return self._full(v).astype(np.int64), np.zeros(self.n, bool)
        match t:
            case Var():
                return self.xs, np.zeros(self.n, bool)
            case BinOp(op=op, left=left, right=right):
                a, ba = self.term(left)
                b, bb = self.term(right)
                bad = ba | bb
                if op == "+":
                    return a + b, bad
                if op == "-":
                    return a - b, bad
                if op == "*":
                    return a * b, bad
                if op == "max":
                    return np.maximum(a, b), bad
                if op == "min":
                    return np.minimum(a, b), bad
                zero = b == 0
                safe = np.where(zero, 1, b)
                r = np.mod(a, np.abs(safe))
                if op == "%":
                    return r, bad | zero
                return (a - r) // safe, bad | zero
        raise _NotVectorizable

    def prop(self, p):
        match p:
            case PTrue():
                return np.ones(self.n, bool), np.zeros(self.n, bool)
            case Cmp(op=op, left=left, right=right):
                a, ba = self.term(left)
                b, bb = self.term(right)
                ops = {"<=": np.less_equal, "<": np.less, "=": np.equal,
                       ">=": np.greater_equal, ">": np.greater, "!=": np.not_equal}
                return ops[op](a, b), ba | bb
            case And(left=left, right=right):
                lv, lb = self.prop(left)
                rv, rb = self.prop(right)
                return lv & rv, lb | (~lb & lv & rb)
            case Or(left=left, right=right):
                lv, lb = self.prop(left)
                rv, rb = self.prop(right)
                return lv | rv, lb | (~lb & ~lv & rb)
            case Not(arg=arg):
                v, b = self.prop(arg)
                return ~v, b
        raise _NotVectorizable


def _int_mask(d, env):
    if isinstance(d, IntegerT):
        return np.ones(len(_SCAN), bool)
    if isinstance(d, Refinement):
        base = _int_mask(d.base, env)
        try:
            value, bad = _VecEval(d.var, _SCAN, env).prop(d.prop)
            return base & value & ~bad
        except _NotVectorizable:
            pass
        from .core import eval_prop

        out = np.zeros(len(_SCAN), bool)
        for k in np.flatnonzero(base):
            x = int(_SCAN[k])
            try:
                out[k] = eval_prop(d.prop, {**env, d.var: x})
            except EvalError:
                pass
        return out
    raise TypeMismatch("not an integer type")


def satisfying_ints(d, env) -> np.ndarray:
    """All integers in the scan range inhabiting an integer-based datatype."""
    return _SCAN[_int_mask(d, env)]


def _float_candidates():
    yield 0.0
    for k in range(1, 129):
        yield k / 2
        yield -k / 2
    for e in range(7, 17):
        yield float(2**e)
        yield -float(2**e)


def _length_order(multiple_of=None):
    if multiple_of:
        mult = [multiple_of * k for k in range(1, 9)]
        rest = [n for n in [0] + list(range(1, MAX_SCAN_LENGTH + 1)) if n not in mult]
        return mult + rest
    return [1, 0] + list(range(2, MAX_SCAN_LENGTH + 1))


def _fixed_length(d):
    """If a refinement pins ``length(var) = t`` (t free of var), return t."""
    stack = [d.prop]
    while stack:
        p = stack.pop()
        if isinstance(p, And):
            stack += [p.left, p.right]
        elif isinstance(p, Cmp) and p.op == "=":
            for a, b in ((p.left, p.right), (p.right, p.left)):
                if a == Length(Var(d.var)) and d.var not in free_vars(b):
                    return b
    return None


def _array_base(d):
    while isinstance(d, Refinement):
        d = d.base
    return d if isinstance(d, ArrayT) else None


def _lengths_for(d, env, multiple_of=None):
    arr = _array_base(d)
    if arr.length is not None:
        return [eval_index(arr.length, env)]
    pinned = []
    t = d
    while isinstance(t, Refinement):
        fixed = _fixed_length(t)
        if fixed is not None:
            pinned.append(eval_index(fixed, env))
        t = t.base
    if pinned:
        n = pinned[0]
        return [n] if isinstance(n, int) and n >= 0 else []
    return _length_order(multiple_of)


def _satisfies(v, d, env):
    try:
        return check_value(v, d, env)
    except CheckError:
        return False


def candidates(d, env, multiple_of=None):
    """Candidate inhabitants of ``d`` in canonical preference order."""
    kind = _array_base(d)
    if kind is not None:
        elem = witness(kind.elem, env)
        for n in _lengths_for(d, env, multiple_of):
            v = (elem,) * n
            if _satisfies(v, d, env):
                yield v
        return
    base = d
    while isinstance(base, Refinement):
        base = base.base
    if isinstance(base, IntegerT):
        sat = satisfying_ints(d, env)
        nonneg = sat[sat >= 0]
        neg = sat[sat < 0][::-1]
        for x in nonneg:
            yield int(x)
        for x in neg:
            yield int(x)
        return
    if isinstance(base, FloatT):
        for x in _float_candidates():
            if _satisfies(x, d, env):
                yield x
        return
    raise TypeMismatch(f"no candidates for {d!r}")


def _env_key(d, env):
    names = _free_names(d)
    return tuple((k, type(env[k]), env[k]) for k in sorted(names) if k in env)


@lru_cache(maxsize=4096)
def _free_names(d):
    return frozenset(free_vars(d))


@lru_cache(maxsize=4096)
def _cached(kind, d, key, multiple_of):
    env = {k: v for k, _, v in key}
    if kind == "one":
        return _witness(d, env, multiple_of)
    return tuple(_witness_set(d, env))


def witness(d, env, multiple_of=None):
    """The canonical inhabitant: 0 (or 0.0, or a short array) when allowed,
    else the nearest satisfying value, preferring non-negative ones."""
    try:
        key = _env_key(d, env)
        hash(key)
    except TypeError:
        return _witness(d, env, multiple_of)
    return _cached("one", d, key, multiple_of)


def witness_set(d, env) -> list:
    """Boundary inhabitants: the smallest, the next smallest, and the largest found."""
    try:
        key = _env_key(d, env)
        hash(key)
    except TypeError:
        return _witness_set(d, env)
    return list(_cached("set", d, key, None))


def _witness(d, env, multiple_of=None):
    """The canonical inhabitant: 0 (or 0.0, or a short array) when allowed,
    else the nearest satisfying value, preferring non-negative ones."""
    for v in candidates(d, env, multiple_of):
        return v
    from .core import show_type

    raise NoWitness(f"no value of type {show_type(d)} found")


def _witness_set(d, env) -> list:
    base = d
    while isinstance(base, Refinement):
        base = base.base
    if isinstance(base, IntegerT):
        if not isinstance(d, Refinement):
            return [0, 1, 2]
        sat = satisfying_ints(d, env)
        if len(sat) == 0:
            return []
        out = [int(sat[0])]
        if len(sat) > 1:
            # the successor when it qualifies, else the next value that does
            out.append(int(sat[1]))
        if int(sat[-1]) not in out:
            out.append(int(sat[-1]))
        return out
    if isinstance(base, FloatT):
        if not isinstance(d, Refinement):
            return [0.0, 1.0, 2.0]
        sat = sorted({x for x in _float_candidates() if _satisfies(x, d, env)})
        if not sat:
            return []
        return list(dict.fromkeys([sat[0], sat[min(1, len(sat) - 1)], sat[-1]]))
    arr = _array_base(d)
    elem = witness(arr.elem, env)
    lengths = sorted(set(_lengths_for(d, env)))
    found = [n for n in lengths if _satisfies((elem,) * n, d, env)]
    if not found:
        return []
    picks = list(dict.fromkeys([found[0], found[min(1, len(found) - 1)], found[-1]]))
    return [(elem,) * n for n in picks]


def describe(v) -> str:
    if is_array(v):
        return f"array of length {len(v)}"
    if is_float(v):
        return repr(v)
    return str(v)
