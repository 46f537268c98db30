"""The SPMD mini-language: AST and a per-rank small-step interpreter.

The interpreter is a generator.  Pure statements run to completion inside
it; every communication statement suspends it by yielding a ``Pending``
request, and the scheduler resumes it with the delivered value (or None).
"""
from __future__ import annotations

import math
from collections import ChainMap
from dataclasses import dataclass, field
from typing import Optional, Tuple

from .core import (
    Datatype,
    checked_int,
    compare,
    euclid_divmod,
    format_value,
    is_array,
    is_float,
    is_int,
)
from .diagnostics import SourceSpan
from .errors import EvalError, PartypesError


def _span():
    return field(default=None, compare=False, repr=False, kw_only=True)


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Num:
    value: object  # int | float
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Bool:
    value: bool
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Unary:
    op: str  # "-" | "not"
    arg: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Call:
    fn: str
    args: Tuple["Expr", ...]
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Subscript:
    array: "Expr"
    index: "Expr"
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class ArrayLit:
    items: Tuple["Expr", ...]
    span: Optional[SourceSpan] = _span()


Expr = object

BUILTINS = {"max": 2, "min": 2, "length": 1, "abs": 1, "array": 2, "float": 1, "int": 1, "sqrt": 1}

# ----------------------------------------------------------------- statements


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Assign:
    name: str
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class AssignIndex:
    name: str
    index: Expr
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Tuple["Stmt", ...]
    orelse: Tuple["Stmt", ...] = ()
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class For:
    var: str
    lo: Expr
    hi: Expr
    body: Tuple["Stmt", ...]
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Target:
    """Where a communication result goes: ``let x = ...`` or ``x = ...``."""

    name: str
    declare: bool = True


@dataclass(frozen=True)
class Send:
    to: Expr
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Recv:
    target: Optional[Target]
    frm: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Broadcast:
    target: Optional[Target]
    root: Expr
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Scatter:
    target: Optional[Target]
    root: Expr
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Gather:
    target: Optional[Target]
    root: Expr
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Reduce:
    target: Optional[Target]
    root: Expr
    op: str
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Allgather:
    target: Optional[Target]
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Allreduce:
    target: Optional[Target]
    op: str
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Apply:
    value: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Program:
    externs: Tuple[Tuple[str, Optional[Datatype]], ...]
    body: Tuple["Stmt", ...]
    span: Optional[SourceSpan] = _span()

    def __str__(self):
        from .pretty import pretty_program

        return pretty_program(self)


Stmt = object
COMM_STMTS = (Send, Recv, Broadcast, Scatter, Gather, Reduce, Allgather, Allreduce, Apply)

# ------------------------------------------------------------------- pending


@dataclass(frozen=True)
class Pending:
    """A suspended communication request from one rank.

    ``kind`` is one of send, recv, broadcast, scatter, gather, reduce,
    allgather, allreduce, apply.  ``peer`` is the destination of a send or
    the source of a recv; ``root`` and ``op`` describe collectives; ``value``
    is the local contribution (None at non-roots of rooted one-to-all
    collectives).
    """

    kind: str
    peer: Optional[int] = None
    root: Optional[int] = None
    op: Optional[str] = None
    value: object = None
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def describe(self) -> str:
        if self.kind == "send":
            return f"send -> {self.peer}"
        if self.kind == "recv":
            return f"recv <- {self.peer}"
        parts = [self.kind]
        if self.root is not None:
            parts.append(f"root {self.root}")
        if self.op is not None:
            parts.append(self.op)
        return " ".join(parts)


class ProgramError(PartypesError):
    """A runtime fault in one rank: division by zero, bad index, bad type."""

    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


# ---------------------------------------------------------------- evaluation


def eval_expr(e: Expr, env):
    match e:
        case Num(value=v) | Bool(value=v):
            return v
        case Var(name=name):
            try:
                return env[name]
            except KeyError:
                raise ProgramError(f"unbound variable '{name}'", e.span) from None
        case ArrayLit(items=items):
            return tuple(eval_expr(x, env) for x in items)
        case Unary(op="-", arg=arg):
            v = _numeric(eval_expr(arg, env), e)
            return checked_int(-v) if is_int(v) else -v
        case Unary(op="not", arg=arg):
            return not _truth(eval_expr(arg, env), e)
        case Binary(op="and", left=a, right=b):
            return _truth(eval_expr(a, env), e) and _truth(eval_expr(b, env), e)
        case Binary(op="or", left=a, right=b):
            return _truth(eval_expr(a, env), e) or _truth(eval_expr(b, env), e)
        case Binary(op=op, left=a, right=b):
            return _binary(op, eval_expr(a, env), eval_expr(b, env), e)
        case Subscript(array=a, index=i):
            arr = eval_expr(a, env)
            idx = eval_expr(i, env)
            if not is_array(arr):
                raise ProgramError(f"indexing non-array {format_value(arr)}", e.span)
            if not is_int(idx):
                raise ProgramError(f"array index must be an integer, got {format_value(idx)}", e.span)
            if not 0 <= idx < len(arr):
                raise ProgramError(f"index {idx} out of range for array of length {len(arr)}", e.span)
            return arr[idx]
        case Call(fn=fn, args=args):
            return _call(fn, [eval_expr(a, env) for a in args], e)
    raise TypeError(f"not an expression: {e!r}")


def _truth(v, e):
    if type(v) is not bool:
        raise ProgramError(f"condition is not a boolean: {v!r}", e.span)
    return v


def _numeric(v, e):
    if not (is_int(v) or is_float(v)):
        raise ProgramError(f"expected a number, got {format_value(v) if is_array(v) else v!r}", e.span)
    return v


def _binary(op, a, b, e):
    try:
        if op in ("=", "!=", "<", "<=", ">", ">="):
            if type(a) is bool or type(b) is bool:
                if op not in ("=", "!="):
                    raise ProgramError("cannot order booleans", e.span)
                return (a == b) == (op == "=")
            return compare(op, a, b)
        a = _numeric(a, e)
        b = _numeric(b, e)
        if is_int(a) and is_int(b):
            if op == "+":
                return checked_int(a + b)
            if op == "-":
                return checked_int(a - b)
            if op == "*":
                return checked_int(a * b)
            if op == "/":
                return euclid_divmod(a, b)[0]
            if op == "%":
                return euclid_divmod(a, b)[1]
        else:
            a, b = float(a), float(b)
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                if b == 0.0:
                    raise ProgramError("division by zero", e.span)
                return a / b
            if op == "%":
                if b == 0.0:
                    raise ProgramError("division by zero", e.span)
                return math.fmod(a, b)
    except EvalError as err:
        raise ProgramError(str(err), e.span) from err
    raise ProgramError(f"unknown operator '{op}'", e.span)


def _call(fn, args, e):
    if fn in ("max", "min"):
        a, b = (_numeric(x, e) for x in args)
        return max(a, b) if fn == "max" else min(a, b)
    if fn == "length":
        if not is_array(args[0]):
            raise ProgramError("length of non-array", e.span)
        return len(args[0])
    if fn == "abs":
        v = _numeric(args[0], e)
        return checked_int(abs(v)) if is_int(v) else abs(v)
    if fn == "array":
        n, v = args
        if not is_int(n) or n < 0:
            raise ProgramError("array length must be a non-negative integer", e.span)
        return (v,) * n
    if fn == "float":
        return float(_numeric(args[0], e))
    if fn == "int":
        v = _numeric(args[0], e)
        return v if is_int(v) else checked_int(math.floor(v))
    if fn == "sqrt":
        v = float(_numeric(args[0], e))
        if v < 0:
            raise ProgramError("square root of a negative number", e.span)
        return math.sqrt(v)
    raise ProgramError(f"unknown function '{fn}'", e.span)


def _int_arg(v, what, e):
    if not is_int(v):
        raise ProgramError(f"{what} must be an integer, got {v!r}", e.span)
    return v


def _bind(env, target, value, span):
    if target is None:
        return
    if target.declare:
        env.maps[0][target.name] = value
    else:
        _assign(env, target.name, value, span)


def _assign(env, name, value, span):
    for scope in env.maps:
        if name in scope:
            scope[name] = value
            return
    raise ProgramError(f"assignment to undeclared variable '{name}'", span)


def eval_stmt(s: Stmt, env: ChainMap):
    """Execute one statement; a generator yielding ``Pending`` requests."""
    match s:
        case Let(name=name, value=value):
            env.maps[0][name] = eval_expr(value, env)
        case Assign(name=name, value=value):
            _assign(env, name, eval_expr(value, env), s.span)
        case AssignIndex(name=name, index=index, value=value):
            arr = eval_expr(Var(name, span=s.span), env)
            i = eval_expr(index, env)
            v = eval_expr(value, env)
            if not is_array(arr):
                raise ProgramError(f"'{name}' is not an array", s.span)
            if not is_int(i) or not 0 <= i < len(arr):
                raise ProgramError(f"index {i!r} out of range for array of length {len(arr)}", s.span)
            _assign(env, name, arr[:i] + (v,) + arr[i + 1:], s.span)
        case If(cond=cond, then=then, orelse=orelse):
            branch = then if _truth(eval_expr(cond, env), cond) else orelse
            yield from eval_block(branch, env.new_child())
        case For(var=var, lo=lo, hi=hi, body=body):
            a = _int_arg(eval_expr(lo, env), "loop bound", s)
            b = _int_arg(eval_expr(hi, env), "loop bound", s)
            for i in range(a, b + 1):
                yield from eval_block(body, env.new_child({var: i}))
        case Send(to=to, value=value):
            peer = _int_arg(eval_expr(to, env), "destination", s)
            yield Pending("send", peer=peer, value=eval_expr(value, env), span=s.span)
        case Recv(target=target, frm=frm):
            peer = _int_arg(eval_expr(frm, env), "source", s)
            got = yield Pending("recv", peer=peer, span=s.span)
            _bind(env, target, got, s.span)
        case Broadcast(target=target, root=root, value=value) | Scatter(target=target, root=root, value=value):
            kind = "broadcast" if isinstance(s, Broadcast) else "scatter"
            r = _int_arg(eval_expr(root, env), "root", s)
            mine = eval_expr(value, env) if r == env["rank"] else None
            got = yield Pending(kind, root=r, value=mine, span=s.span)
            _bind(env, target, got, s.span)
        case Gather(target=target, root=root, value=value):
            r = _int_arg(eval_expr(root, env), "root", s)
            got = yield Pending("gather", root=r, value=eval_expr(value, env), span=s.span)
            _bind(env, target, got, s.span)
        case Reduce(target=target, root=root, op=op, value=value):
            r = _int_arg(eval_expr(root, env), "root", s)
            got = yield Pending("reduce", root=r, op=op, value=eval_expr(value, env), span=s.span)
            _bind(env, target, got, s.span)
        case Allgather(target=target, value=value):
            got = yield Pending("allgather", value=eval_expr(value, env), span=s.span)
            _bind(env, target, got, s.span)
        case Allreduce(target=target, op=op, value=value):
            got = yield Pending("allreduce", op=op, value=eval_expr(value, env), span=s.span)
            _bind(env, target, got, s.span)
        case Apply(value=value):
            yield Pending("apply", value=eval_expr(value, env), span=s.span)
        case _:
            raise TypeError(f"not a statement: {s!r}")


def eval_block(stmts, env: ChainMap):
    for s in stmts:
        yield from eval_stmt(s, env)


def rank_env(rank: int, size: int, externs) -> ChainMap:
    return ChainMap({}, dict(externs), {"rank": rank, "size": size})


def run_rank(prog: Program, rank: int, size: int, externs):
    """The generator driving one rank from start to termination."""
    env = rank_env(rank, size, externs)
    yield from eval_block(prog.body, env)
    return env
