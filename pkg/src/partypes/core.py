"""Protocol AST, index terms, propositions, datatypes and runtime values.

Runtime values are plain Python objects: ``int`` (checked to 64 bits),
``float`` and ``tuple`` for arrays.  Environments are ordinary mappings from
names to values; every environment used for evaluation contains ``size``.
"""
from __future__ import annotations

import itertools
import math
import operator
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple, Union

from .diagnostics import SourceSpan
from .errors import (
    CheckError,
    DivisionByZero,
    EvalError,
    IndexOutOfRange,
    IntegerOverflow,
    TypeMismatch,
    UnboundVariable,
)

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

ARITH_OPS = ("+", "-", "*", "/", "%", "max", "min")
CMP_OPS = ("<=", "<", "=", ">=", ">", "!=")
REDUCE_OPS = ("max", "min", "sum")

Value = Union[int, float, tuple]


def _span():
    return field(default=None, compare=False, repr=False, kw_only=True)


# ---------------------------------------------------------------- index terms


@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class IntLit:
    value: int
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class ValueLit:
    """A float or array value embedded in a term by substitution."""

    value: Value
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "IndexTerm"
    right: "IndexTerm"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Length:
    arg: "IndexTerm"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Index:
    array: "IndexTerm"
    index: "IndexTerm"
    span: Optional[SourceSpan] = _span()


IndexTerm = Union[Var, IntLit, ValueLit, BinOp, Length, Index]

# --------------------------------------------------------------- propositions


@dataclass(frozen=True)
class PTrue:
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Cmp:
    op: str
    left: IndexTerm
    right: IndexTerm
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class And:
    left: "Proposition"
    right: "Proposition"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Or:
    left: "Proposition"
    right: "Proposition"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Not:
    arg: "Proposition"
    span: Optional[SourceSpan] = _span()


Proposition = Union[PTrue, Cmp, And, Or, Not]

# ------------------------------------------------------------------ datatypes


@dataclass(frozen=True)
class IntegerT:
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class FloatT:
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class ArrayT:
    elem: "Datatype"
    length: Optional[IndexTerm] = None
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Refinement:
    var: str
    base: "Datatype"
    prop: Proposition
    span: Optional[SourceSpan] = _span()


Datatype = Union[IntegerT, FloatT, ArrayT, Refinement]

INTEGER = IntegerT()
FLOAT = FloatT()


def natural(var="x"):
    return Refinement(var, INTEGER, Cmp(">=", Var(var), IntLit(0)))


def positive(var="x"):
    return Refinement(var, INTEGER, Cmp(">=", Var(var), IntLit(1)))


def sized_array(elem, length):
    """``D[n]``: an array of ``D`` whose length is ``n``."""
    var = fresh_name(free_vars(length))
    return Refinement(var, ArrayT(elem), Cmp("=", Length(Var(var)), length))


# ------------------------------------------------------------ protocol terms


@dataclass(frozen=True)
class Skip:
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Message:
    frm: IndexTerm
    to: IndexTerm
    payload: Datatype
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Broadcast:
    root: IndexTerm
    var: str
    payload: Datatype
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Scatter:
    root: IndexTerm
    payload: Datatype
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Gather:
    root: IndexTerm
    payload: Datatype
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Reduce:
    root: IndexTerm
    op: str
    payload: Datatype
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Allgather:
    var: str
    payload: Datatype
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Allreduce:
    op: str
    var: str
    payload: Datatype
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Seq:
    items: Tuple["ProtocolTerm", ...]
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Foreach:
    var: str
    lo: IndexTerm
    hi: IndexTerm
    body: "ProtocolTerm"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Choice:
    cond: Proposition
    then: "ProtocolTerm"
    orelse: "ProtocolTerm"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Val:
    var: str
    payload: Datatype
    span: Optional[SourceSpan] = _span()


ProtocolTerm = Union[
    Skip, Message, Broadcast, Scatter, Gather, Reduce, Allgather, Allreduce, Seq, Foreach, Choice, Val
]

BINDERS = (Val, Broadcast, Allgather, Allreduce)
COLLECTIVES = (Broadcast, Scatter, Gather, Reduce, Allgather, Allreduce)


@dataclass(frozen=True)
class Protocol:
    name: str
    size_prop: Proposition
    body: ProtocolTerm
    span: Optional[SourceSpan] = _span()

    def __str__(self):
        from .pretty import pretty_protocol

        return pretty_protocol(self)


# --------------------------------------------------------------------- values


def is_int(v) -> bool:
    return type(v) is int


def is_float(v) -> bool:
    return type(v) is float


def is_array(v) -> bool:
    return type(v) is tuple


def checked_int(n: int) -> int:
    if n < INT_MIN or n > INT_MAX:
        raise IntegerOverflow(f"integer overflow: {n}")
    return n


def same_value(a, b) -> bool:
    """Bit-level value equality (NaN equals NaN, 0.0 differs from -0.0)."""
    if type(a) is not type(b):
        return False
    if is_array(a):
        return len(a) == len(b) and all(same_value(x, y) for x, y in zip(a, b))
    if is_float(a):
        return math.copysign(1.0, a) == math.copysign(1.0, b) and (a == b or (a != a and b != b))
    return a == b


def format_value(v) -> str:
    if is_int(v):
        return f"int({v})"
    if is_float(v):
        return f"float({v!r})"
    return f"array({len(v)})"


def show_value(v) -> str:
    if is_array(v):
        return "[" + ", ".join(show_value(x) for x in v) + "]"
    return repr(v)


def euclid_divmod(a: int, b: int):
    if b == 0:
        raise DivisionByZero("division by zero")
    r = a % abs(b)
    return (a - r) // b, r


def fold_values(op: str, values):
    """Fold reduction contributions left to right (ascending rank order)."""
    values = list(values)
    if not values:
        raise EvalError("reduction over no values")
    acc = values[0]
    for v in values[1:]:
        acc = _combine(op, acc, v)
    return acc


def _combine(op, a, b):
    if is_array(a) or is_array(b):
        if not (is_array(a) and is_array(b)) or len(a) != len(b):
            raise TypeMismatch("reduction over arrays of different shapes")
        return tuple(_combine(op, x, y) for x, y in zip(a, b))
    if type(a) is not type(b) or not (is_int(a) or is_float(a)):
        raise TypeMismatch(f"cannot reduce {format_value(a)} with {format_value(b)}")
    if op == "sum":
        return checked_int(a + b) if is_int(a) else a + b
    if op == "max":
        return max(a, b)
    if op == "min":
        return min(a, b)
    raise EvalError(f"unknown reduction '{op}'")


# ----------------------------------------------------------------- evaluation


def eval_index(t: IndexTerm, env: Mapping[str, Value]) -> Value:
    match t:
        case IntLit(value=v) | ValueLit(value=v):
            return v
        case Var(name=name):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariable(name) from None
        case BinOp(op=op, left=left, right=right):
            a = _need_int(eval_index(left, env), op)
            b = _need_int(eval_index(right, env), op)
            return _arith(op, a, b)
        case Length(arg=arg):
            v = eval_index(arg, env)
            if not is_array(v):
                raise TypeMismatch(f"length of non-array {format_value(v)}")
            return len(v)
        case Index(array=array, index=index):
            arr = eval_index(array, env)
            if not is_array(arr):
                raise TypeMismatch(f"indexing non-array {format_value(arr)}")
            i = _need_int(eval_index(index, env), "[]")
            if not 0 <= i < len(arr):
                raise IndexOutOfRange(f"index {i} out of range for array of length {len(arr)}")
            return arr[i]
    raise TypeError(f"not an index term: {t!r}")


def _need_int(v, op):
    if not is_int(v):
        raise TypeMismatch(f"operator '{op}' expects integers, got {format_value(v)}")
    return v


def _arith(op, a, b):
    if op == "+":
        return checked_int(a + b)
    if op == "-":
        return checked_int(a - b)
    if op == "*":
        return checked_int(a * b)
    if op == "/":
        return checked_int(euclid_divmod(a, b)[0])
    if op == "%":
        return euclid_divmod(a, b)[1]
    if op == "max":
        return max(a, b)
    if op == "min":
        return min(a, b)
    raise EvalError(f"unknown operator '{op}'")


def compare(op, a, b) -> bool:
    if op == "=":
        return same_value(a, b) if is_array(a) or is_array(b) else a == b
    if op == "!=":
        return not compare("=", a, b)
    if is_array(a) or is_array(b):
        raise TypeMismatch(f"cannot order {format_value(a)} and {format_value(b)}")
    if op == "<=":
        return a <= b
    if op == "<":
        return a < b
    if op == ">=":
        return a >= b
    if op == ">":
        return a > b
    raise EvalError(f"unknown comparison '{op}'")


def eval_prop(p: Proposition, env: Mapping[str, Value]) -> bool:
    match p:
        case PTrue():
            return True
        case Cmp(op=op, left=left, right=right):
            return compare(op, eval_index(left, env), eval_index(right, env))
        case And(left=left, right=right):
            return eval_prop(left, env) and eval_prop(right, env)
        case Or(left=left, right=right):
            return eval_prop(left, env) or eval_prop(right, env)
        case Not(arg=arg):
            return not eval_prop(arg, env)
    raise TypeError(f"not a proposition: {p!r}")


def check_value(v: Value, d: Datatype, env: Mapping[str, Value]) -> bool:
    """Does ``v`` inhabit ``d``?  Evaluation failures raise CheckError."""
    try:
        return _inhabits(v, d, env)
    except EvalError as e:
        raise CheckError(f"cannot check {show_value(v)} against {show_type(d)}: {e}") from e


_NOTHING = object()


def _inhabits(v, d, env):
    match d:
        case IntegerT():
            return is_int(v)
        case FloatT():
            return is_float(v)
        case ArrayT(elem=elem, length=length):
            if not is_array(v):
                return False
            if length is not None and eval_index(length, env) != len(v):
                return False
            if v and all(map(operator.is_, v, itertools.repeat(v[0]))):
                return _inhabits(v[0], elem, env)
            prev = _NOTHING
            for x in v:
                # element checks are position independent; skip repeats of the same object
                if x is not prev and not _inhabits(x, elem, env):
                    return False
                prev = x
            return True
        case Refinement(var=var, base=base, prop=prop):
            if not _inhabits(v, base, env):
                return False
            return eval_prop(prop, {**env, var: v})
    raise TypeError(f"not a datatype: {d!r}")


def base_kind(d: Datatype) -> str:
    """'integer', 'float' or 'array' once refinements are stripped."""
    while isinstance(d, Refinement):
        d = d.base
    if isinstance(d, IntegerT):
        return "integer"
    if isinstance(d, FloatT):
        return "float"
    return "array"


def strip_refinements(d: Datatype) -> Datatype:
    while isinstance(d, Refinement):
        d = d.base
    return d


# ------------------------------------------------------ variables and binding


def fresh_name(avoid, base="x") -> str:
    if base not in avoid:
        return base
    k = 1
    while f"{base}{k}" in avoid:
        k += 1
    return f"{base}{k}"


def bound_names(term: ProtocolTerm) -> set:
    """Names a sequence item binds over the remainder of its sequence."""
    if isinstance(term, BINDERS):
        return {term.var}
    if isinstance(term, Seq):
        out = set()
        for item in term.items:
            out |= bound_names(item)
        return out
    return set()


def free_vars(node) -> set:
    match node:
        case Var(name=name):
            return {name}
        case IntLit() | ValueLit() | PTrue() | IntegerT() | FloatT() | Skip():
            return set()
        case BinOp(left=a, right=b) | Cmp(left=a, right=b) | And(left=a, right=b) | Or(left=a, right=b):
            return free_vars(a) | free_vars(b)
        case Length(arg=a) | Not(arg=a):
            return free_vars(a)
        case Index(array=a, index=i):
            return free_vars(a) | free_vars(i)
        case ArrayT(elem=elem, length=length):
            return free_vars(elem) | (free_vars(length) if length is not None else set())
        case Refinement(var=var, base=base, prop=prop):
            return free_vars(base) | (free_vars(prop) - {var})
        case Message(frm=f, to=t, payload=d):
            return free_vars(f) | free_vars(t) | free_vars(d)
        case Broadcast(root=root, var=var, payload=d):
            return free_vars(root) | (free_vars(d) - {var})
        case Scatter(root=root, payload=d) | Gather(root=root, payload=d) | Reduce(root=root, payload=d):
            return free_vars(root) | free_vars(d)
        case Allgather(var=var, payload=d) | Allreduce(var=var, payload=d) | Val(var=var, payload=d):
            return free_vars(d) - {var}
        case Seq(items=items):
            out, bound = set(), set()
            for item in items:
                out |= free_vars(item) - bound
                bound |= bound_names(item)
            return out
        case Foreach(var=var, lo=lo, hi=hi, body=body):
            return free_vars(lo) | free_vars(hi) | (free_vars(body) - {var})
        case Choice(cond=c, then=a, orelse=b):
            return free_vars(c) | free_vars(a) | free_vars(b)
        case Protocol(size_prop=p, body=body):
            return free_vars(p) | free_vars(body)
    raise TypeError(f"unexpected node {node!r}")


def literal(v: Value) -> IndexTerm:
    return IntLit(v) if is_int(v) else ValueLit(v)


def subst(term, var: str, v: Value):
    """Capture-avoiding substitution of the closed value ``v`` for ``var``."""
    return _subst(term, var, literal(v))


def _subst(node, x, lit):
    match node:
        case Var(name=name):
            return replace(lit, span=node.span) if name == x else node
        case IntLit() | ValueLit() | PTrue() | IntegerT() | FloatT() | Skip():
            return node
        case BinOp(left=a, right=b) | Cmp(left=a, right=b) | And(left=a, right=b) | Or(left=a, right=b):
            return replace(node, left=_subst(a, x, lit), right=_subst(b, x, lit))
        case Length(arg=a) | Not(arg=a):
            return replace(node, arg=_subst(a, x, lit))
        case Index(array=a, index=i):
            return replace(node, array=_subst(a, x, lit), index=_subst(i, x, lit))
        case ArrayT(elem=elem, length=length):
            return replace(
                node,
                elem=_subst(elem, x, lit),
                length=None if length is None else _subst(length, x, lit),
            )
        case Refinement(var=var, base=base, prop=prop):
            return replace(node, base=_subst(base, x, lit), prop=prop if var == x else _subst(prop, x, lit))
        case Message(frm=f, to=t, payload=d):
            return replace(node, frm=_subst(f, x, lit), to=_subst(t, x, lit), payload=_subst(d, x, lit))
        case Broadcast(root=root, var=var, payload=d):
            return replace(node, root=_subst(root, x, lit), payload=d if var == x else _subst(d, x, lit))
        case Scatter(root=root, payload=d) | Gather(root=root, payload=d) | Reduce(root=root, payload=d):
            return replace(node, root=_subst(root, x, lit), payload=_subst(d, x, lit))
        case Allgather(var=var, payload=d) | Allreduce(var=var, payload=d) | Val(var=var, payload=d):
            return node if var == x else replace(node, payload=_subst(d, x, lit))
        case Seq(items=items):
            out = []
            live = True
            for item in items:
                out.append(_subst(item, x, lit) if live else item)
                if live and x in bound_names(item):
                    live = False
            return replace(node, items=tuple(out))
        case Foreach(var=var, lo=lo, hi=hi, body=body):
            return replace(
                node, lo=_subst(lo, x, lit), hi=_subst(hi, x, lit), body=body if var == x else _subst(body, x, lit)
            )
        case Choice(cond=c, then=a, orelse=b):
            return replace(node, cond=_subst(c, x, lit), then=_subst(a, x, lit), orelse=_subst(b, x, lit))
    raise TypeError(f"unexpected node {node!r}")


def normalize(term: ProtocolTerm) -> ProtocolTerm:
    """Flatten nested sequences and drop Skip; Seq([]) is Skip, Seq([t]) is t."""
    match term:
        case Seq(items=items):
            flat = []
            for item in items:
                item = normalize(item)
                if isinstance(item, Seq):
                    flat.extend(item.items)
                elif not isinstance(item, Skip):
                    flat.append(item)
            if not flat:
                return Skip(span=term.span)
            if len(flat) == 1:
                return flat[0]
            return Seq(tuple(flat), span=term.span)
        case Foreach(body=body):
            return replace(term, body=normalize(body))
        case Choice(then=a, orelse=b):
            return replace(term, then=normalize(a), orelse=normalize(b))
    return term


def normalize_protocol(p: Protocol) -> Protocol:
    return replace(p, body=normalize(p.body))


def seq_items(term: ProtocolTerm) -> tuple:
    """Items of a normalized term viewed as a sequence."""
    if isinstance(term, Seq):
        return term.items
    if isinstance(term, Skip):
        return ()
    return (term,)


def make_seq(items) -> ProtocolTerm:
    items = tuple(items)
    if not items:
        return Skip()
    if len(items) == 1:
        return items[0]
    return Seq(items)


# ---------------------------------------------------------- alpha-equivalence


def canonical_type(d: Datatype, depth: int = 0) -> Datatype:
    """Rename refinement binders to positional names so that alpha-equivalent
    datatypes compare equal."""
    match d:
        case Refinement(var=var, base=base, prop=prop):
            name = f"%{depth}"
            return Refinement(name, canonical_type(base, depth + 1), _subst(prop, var, Var(name)))
        case ArrayT(elem=elem, length=length):
            return ArrayT(canonical_type(elem, depth), length)
    return d


def alpha_equal(a: Datatype, b: Datatype) -> bool:
    return canonical_type(a) == canonical_type(b)


# ------------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


def show_term(t: IndexTerm, prec: int = 0) -> str:
    match t:
        case IntLit(value=v):
            s = str(v)
            return f"({s})" if v < 0 and prec >= 4 else s
        case ValueLit(value=v):
            s = show_value(v)
            return f"({s})" if not is_array(v) and v < 0 and prec >= 4 else s
        case Var(name=name):
            return name
        case BinOp(op=op, left=a, right=b) if op in ("max", "min"):
            return f"{op}({show_term(a)}, {show_term(b)})"
        case BinOp(op=op, left=a, right=b):
            p = _PREC[op]
            s = f"{show_term(a, p)} {op} {show_term(b, p + 1)}"
            return f"({s})" if p < prec else s
        case Length(arg=a):
            return f"length({show_term(a)})"
        case Index(array=a, index=i):
            return f"{show_term(a, 4)}[{show_term(i)}]"
    raise TypeError(f"not an index term: {t!r}")


def show_prop(p: Proposition, prec: int = 0) -> str:
    match p:
        case PTrue():
            return "true"
        case Cmp(op=op, left=a, right=b):
            return f"{show_term(a)} {op} {show_term(b)}"
        case Or(left=a, right=b):
            s = f"{show_prop(a, 1)} or {show_prop(b, 2)}"
            return f"({s})" if prec > 1 else s
        case And(left=a, right=b):
            s = f"{show_prop(a, 2)} and {show_prop(b, 3)}"
            return f"({s})" if prec > 2 else s
        case Not(arg=a):
            s = f"not {show_prop(a, 3)}"
            return f"({s})" if prec > 3 else s
    raise TypeError(f"not a proposition: {p!r}")


def show_type(d: Datatype) -> str:
    match d:
        case IntegerT():
            return "integer"
        case FloatT():
            return "float"
        case ArrayT(elem=elem, length=None):
            return f"{show_type(elem)}[]"
        case ArrayT(elem=elem, length=length):
            return f"{show_type(elem)}[{show_term(length)}]"
        case Refinement(var=var, base=IntegerT(), prop=Cmp(op=">=", left=Var(name=v), right=IntLit(value=k))) if (
            var == v == "x" and k in (0, 1)
        ):
            return "natural" if k == 0 else "positive"
        case Refinement(var=var, base=ArrayT(elem=elem, length=None), prop=Cmp(op="=", left=Length(arg=Var(name=v)), right=n)) if (
            var == v and var == fresh_name(free_vars(n))
        ):
            return f"{show_type(elem)}[{show_term(n)}]"
        case Refinement(var=var, base=base, prop=prop):
            return f"{{{var}: {show_type(base)} | {show_prop(prop)}}}"
    raise TypeError(f"not a datatype: {d!r}")


def show_refinement(d: Datatype) -> str:
    """``show_type`` with an abbreviated outer refinement spelled out:
    ``positive, i.e. {x: integer | x >= 1}``."""
    short = show_type(d)
    if not isinstance(d, Refinement):
        return short
    full = f"{{{d.var}: {show_type(d.base)} | {show_prop(d.prop)}}}"
    return short if short == full else f"{short}, i.e. {full}"
