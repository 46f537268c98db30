"""Printers producing text that the parsers read back to an equal AST."""
from __future__ import annotations

from . import core as c
from . import program as pg
from .core import show_prop, show_term, show_type

INDENT = "  "


def pretty_protocol(p: c.Protocol) -> str:
    lines = [f"protocol {p.name} ({show_prop(p.size_prop)}) {{"]
    _items(c.normalize(p.body), 1, lines)
    lines.append("}")
    return "\n".join(lines)


def pretty_term(t: c.ProtocolTerm) -> str:
    lines = []
    _items(c.normalize(t), 0, lines)
    return "\n".join(lines)


def _items(t, depth, out):
    for item in c.seq_items(t):
        _item(item, depth, out)


def _item(t, depth, out):
    pad = INDENT * depth
    match t:
        case c.Message(frm=f, to=to, payload=d):
            out.append(f"{pad}message {show_term(f)}, {show_term(to)} {show_type(d)}")
        case c.Broadcast(root=r, var=x, payload=d):
            out.append(f"{pad}broadcast {show_term(r)} {x}: {show_type(d)}")
        case c.Scatter(root=r, payload=d):
            out.append(f"{pad}scatter {show_term(r)} {show_type(d)}")
        case c.Gather(root=r, payload=d):
            out.append(f"{pad}gather {show_term(r)} {show_type(d)}")
        case c.Reduce(root=r, op=op, payload=d):
            out.append(f"{pad}reduce {show_term(r)} {op} {show_type(d)}")
        case c.Allgather(var=x, payload=d):
            out.append(f"{pad}allgather {x}: {show_type(d)}")
        case c.Allreduce(op=op, var=x, payload=d):
            out.append(f"{pad}allreduce {op} {x}: {show_type(d)}")
        case c.Val(var=x, payload=d):
            out.append(f"{pad}val {x}: {show_type(d)}")
        case c.Foreach(var=x, lo=lo, hi=hi, body=body):
            out.append(f"{pad}foreach {x}: {show_term(lo)} .. {show_term(hi)} {{")
            _items(body, depth + 1, out)
            out.append(pad + "}")
        case c.Choice(cond=cond, then=a, orelse=b):
            out.append(f"{pad}if ({show_prop(cond)}) {{")
            _items(a, depth + 1, out)
            if isinstance(b, c.Skip):
                out.append(pad + "}")
            else:
                out.append(pad + "} else {")
                _items(b, depth + 1, out)
                out.append(pad + "}")
        case c.Seq():
            _items(t, depth, out)
        case c.Skip():
            pass
        case _:
            raise TypeError(f"not a protocol term: {t!r}")


# ------------------------------------------------------------------ programs

_EXPR_PREC = {
    "or": 1, "and": 2,
    "=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "%": 6,
}


def show_expr(e, prec=0) -> str:
    match e:
        case pg.Num(value=v):
            s = repr(v)
            return f"({s})" if v < 0 and prec >= 8 else s
        case pg.Bool(value=v):
            return "true" if v else "false"
        case pg.Var(name=name):
            return name
        case pg.ArrayLit(items=items):
            return "[" + ", ".join(show_expr(x) for x in items) + "]"
        case pg.Call(fn=fn, args=args):
            return f"{fn}(" + ", ".join(show_expr(x) for x in args) + ")"
        case pg.Subscript(array=a, index=i):
            return f"{show_expr(a, 8)}[{show_expr(i)}]"
        case pg.Unary(op="not", arg=a):
            s = f"not {show_expr(a, 3)}"
            return f"({s})" if prec > 3 else s
        case pg.Unary(op="-", arg=a):
            s = f"-{show_expr(a, 8)}"
            return f"({s})" if prec > 7 else s
        case pg.Binary(op=op, left=a, right=b):
            p = _EXPR_PREC[op]
            # comparisons do not chain, so both operands bind tighter
            lp = p + 1 if p == 4 else p
            s = f"{show_expr(a, lp)} {op} {show_expr(b, p + 1)}"
            return f"({s})" if p < prec else s
    raise TypeError(f"not an expression: {e!r}")


def _target(t):
    if t is None:
        return ""
    return f"let {t.name} = " if t.declare else f"{t.name} = "


def pretty_program(p: pg.Program) -> str:
    lines = []
    for name, d in p.externs:
        lines.append(f"extern {name}: {show_type(d)}" if d is not None else f"extern {name}")
    _stmts(p.body, 0, lines)
    return "\n".join(lines) + "\n"


def _stmts(stmts, depth, out):
    for s in stmts:
        _stmt(s, depth, out)


def _block(header, body, depth, out):
    out.append(INDENT * depth + header + " {")
    _stmts(body, depth + 1, out)


def _stmt(s, depth, out):
    pad = INDENT * depth
    match s:
        case pg.Let(name=name, value=v):
            out.append(f"{pad}let {name} = {show_expr(v)}")
        case pg.Assign(name=name, value=v):
            out.append(f"{pad}{name} = {show_expr(v)}")
        case pg.AssignIndex(name=name, index=i, value=v):
            out.append(f"{pad}{name}[{show_expr(i)}] = {show_expr(v)}")
        case pg.If(cond=cond, then=then, orelse=orelse):
            _block(f"if ({show_expr(cond)})", then, depth, out)
            if orelse:
                out.append(pad + "} else {")
                _stmts(orelse, depth + 1, out)
            out.append(pad + "}")
        case pg.For(var=var, lo=lo, hi=hi, body=body):
            _block(f"for {var} in {show_expr(lo)} .. {show_expr(hi)}", body, depth, out)
            out.append(pad + "}")
        case pg.Send(to=to, value=v):
            out.append(f"{pad}send({show_expr(to)}, {show_expr(v)})")
        case pg.Apply(value=v):
            out.append(f"{pad}apply({show_expr(v)})")
        case pg.Recv(target=t, frm=f):
            out.append(f"{pad}{_target(t)}recv({show_expr(f)})")
        case pg.Broadcast(target=t, root=r, value=v) | pg.Scatter(target=t, root=r, value=v) | pg.Gather(
            target=t, root=r, value=v
        ):
            kind = type(s).__name__.lower()
            out.append(f"{pad}{_target(t)}{kind}({show_expr(r)}, {show_expr(v)})")
        case pg.Reduce(target=t, root=r, op=op, value=v):
            out.append(f"{pad}{_target(t)}reduce({show_expr(r)}, {op}, {show_expr(v)})")
        case pg.Allgather(target=t, value=v):
            out.append(f"{pad}{_target(t)}allgather({show_expr(v)})")
        case pg.Allreduce(target=t, op=op, value=v):
            out.append(f"{pad}{_target(t)}allreduce({op}, {show_expr(v)})")
        case _:
            raise TypeError(f"not a statement: {s!r}")
