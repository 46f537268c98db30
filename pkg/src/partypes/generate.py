"""Seeded random generators for protocols and programs, used by the test suite.

``random_protocol`` builds arbitrary scoped syntax trees (not necessarily
well formed) for parser round-trips.  ``random_wellformed`` builds protocols
that pass the well-formedness check at one given size.  ``swap_send_recv``
mutates a program by exchanging two adjacent point-to-point statements.
"""
from __future__ import annotations

import random
from dataclasses import replace

from . import core as c
from . import program as pg

NAMES = ["a", "b", "k", "m", "n", "p", "q", "w", "z", "n1", "len", "cnt", "iter", "tmp"]
OPS = ["+", "-", "*", "/", "%", "max", "min"]
REDUCE = list(c.REDUCE_OPS)


# -------------------------------------------------------- arbitrary syntax


class _Arbitrary:
    def __init__(self, rng: random.Random):
        self.rng = rng

    def fresh(self, scope):
        taken = set(scope)
        options = [n for n in NAMES if n not in taken]
        if options and self.rng.random() < 0.9:
            return self.rng.choice(options)
        return c.fresh_name(taken | set(NAMES), "v")

    def term(self, scope, depth):
        r = self.rng.random()
        if depth <= 0 or r < 0.35:
            pick = self.rng.random()
            if pick < 0.45:
                return c.Var(self.rng.choice(["size", *scope]))
            if pick < 0.9:
                return c.IntLit(self.rng.randint(-3, 12))
            return c.ValueLit(self.rng.randint(0, 12) / 4)
        if r < 0.8:
            return c.BinOp(self.rng.choice(OPS), self.term(scope, depth - 1), self.term(scope, depth - 1))
        if r < 0.9:
            return c.Length(self.term(scope, depth - 1))
        return c.Index(self.term(scope, depth - 1), self.term(scope, depth - 1))

    def prop(self, scope, depth):
        r = self.rng.random()
        if depth <= 0 or r < 0.45:
            if self.rng.random() < 0.1:
                return c.PTrue()
            op = self.rng.choice(c.CMP_OPS)
            return c.Cmp(op, self.term(scope, 2), self.term(scope, 2))
        if r < 0.65:
            return c.And(self.prop(scope, depth - 1), self.prop(scope, depth - 1))
        if r < 0.85:
            return c.Or(self.prop(scope, depth - 1), self.prop(scope, depth - 1))
        return c.Not(self.prop(scope, depth - 1))

    def dtype(self, scope, depth):
        r = self.rng.random()
        if depth <= 0 or r < 0.3:
            return self.rng.choice([c.INTEGER, c.FLOAT, c.natural(), c.positive()])
        if r < 0.5:
            return c.ArrayT(self.dtype(scope, depth - 1))
        if r < 0.7:
            return c.sized_array(self.dtype(scope, depth - 1), self.term(scope, 2))
        var = self.rng.choice(["x", "y", *NAMES[:3]])
        return c.Refinement(var, self.dtype(scope, depth - 1), self.prop([*scope, var], 2))

    def items(self, scope, depth, budget):
        out = []
        scope = list(scope)
        for _ in range(self.rng.randint(0, budget)):
            item, bound = self.item(scope, depth)
            out.append(item)
            if bound:
                scope.append(bound)
        return c.make_seq(out)

    def item(self, scope, depth):
        rng = self.rng
        kinds = ["message", "broadcast", "scatter", "gather", "reduce", "allgather", "allreduce", "val", "skip"]
        if depth > 0:
            kinds += ["foreach", "choice", "seq"]
        kind = rng.choice(kinds)
        t = lambda: self.term(scope, 2)  # noqa: E731
        d = lambda: self.dtype(scope, 2)  # noqa: E731
        if kind == "message":
            return c.Message(t(), t(), d()), None
        if kind == "broadcast":
            x = self.fresh(scope)
            return c.Broadcast(t(), x, d()), x
        if kind == "scatter":
            return c.Scatter(t(), d()), None
        if kind == "gather":
            return c.Gather(t(), d()), None
        if kind == "reduce":
            return c.Reduce(t(), rng.choice(REDUCE), d()), None
        if kind == "allgather":
            x = self.fresh(scope)
            return c.Allgather(x, d()), x
        if kind == "allreduce":
            x = self.fresh(scope)
            return c.Allreduce(rng.choice(REDUCE), x, d()), x
        if kind == "val":
            x = self.fresh(scope)
            return c.Val(x, d()), x
        if kind == "skip":
            return c.Skip(), None
        if kind == "foreach":
            x = self.fresh(scope)
            return c.Foreach(x, t(), t(), self.items([*scope, x], depth - 1, 3)), None
        if kind == "choice":
            orelse = self.items(scope, depth - 1, 2) if rng.random() < 0.7 else c.Skip()
            return c.Choice(self.prop(scope, 2), self.items(scope, depth - 1, 3), orelse), None
        # nested sequences are transparent, so their binders stay in scope
        inner = [self.item(scope, depth - 1) for _ in range(rng.randint(2, 3))]
        return c.Seq(tuple(i for i, _ in inner)), None


def random_protocol(rng: random.Random, depth=3) -> c.Protocol:
    """A syntactically valid, properly scoped protocol; it may be ill formed."""
    g = _Arbitrary(rng)
    name = rng.choice(["P", "Ring", "Stencil", "T1"])
    size_prop = g.prop([], 1) if rng.random() < 0.7 else c.PTrue()
    body = g.items([], depth, 5)
    return _fix_seq_binders(c.Protocol(name, size_prop, body))


def _fix_seq_binders(p):
    """Nested Seq items were generated independently and may rebind a name
    already in scope; such trees cannot be written down, so drop them."""
    from .parser import parse_protocol
    from .errors import ParseError

    try:
        parse_protocol(str(p))
    except ParseError:
        return c.Protocol(p.name, p.size_prop, _strip_nested(p.body))
    return p


def _strip_nested(t):
    match t:
        case c.Seq(items=items):
            return c.make_seq(tuple(_strip_nested(i) for i in items if not isinstance(i, c.Seq)))
        case c.Foreach(body=body):
            return replace(t, body=_strip_nested(body))
        case c.Choice(then=a, orelse=b):
            return replace(t, then=_strip_nested(a), orelse=_strip_nested(b))
    return t


# ----------------------------------------------------- well-formed protocols


_SMALL = lambda hi: c.Refinement("y", c.natural(), c.Cmp("<=", c.Var("y"), c.IntLit(hi)))  # noqa: E731


class _WellFormed:
    """Generates items that are well formed at ``size`` by construction in
    most cases; callers still filter through the checker."""

    def __init__(self, rng, size):
        self.rng = rng
        self.size = size
        self.counter = 0

    def name(self, prefix):
        self.counter += 1
        return f"{prefix}{self.counter}"

    def scalar(self):
        return self.rng.choice(
            [c.INTEGER, c.FLOAT, c.natural(), _SMALL(3), c.Refinement("y", c.FLOAT, c.Cmp(">=", c.Var("y"), c.IntLit(0)))]
        )

    def rank(self, ranks):
        """A rank term: a literal, or a loop variable shifted modulo size."""
        if ranks and self.rng.random() < 0.6:
            v = self.rng.choice(ranks)
            k = self.rng.randint(0, self.size - 1)
            return c.BinOp("%", c.BinOp("+", c.Var(v), c.IntLit(k)), c.Var("size")) if k else c.Var(v)
        return c.IntLit(self.rng.randint(0, self.size - 1))

    def items(self, env, depth, budget):
        out = []
        env = dict(env)
        for _ in range(self.rng.randint(1, budget)):
            item = self.item(env, depth)
            if item is not None:
                out.append(item)
        return c.make_seq(out)

    def item(self, env, depth):
        """``env`` maps names in scope to their role: 'rank', 'small' or 'len'."""
        rng = self.rng
        ranks = [v for v, role in env.items() if role == "rank"]
        smalls = [v for v, role in env.items() if role == "small"]
        lens = [v for v, role in env.items() if role == "len"]
        kinds = ["message"] * 4 + ["broadcast", "scatter", "gather", "reduce", "allgather", "allreduce", "val"]
        if depth > 0:
            kinds += ["foreach_rank", "foreach_small", "choice"]
        kind = rng.choice(kinds)
        if kind == "message":
            a = self.rank(ranks)
            if ranks and rng.random() < 0.5 and isinstance(a, c.Var):
                b = c.BinOp("%", c.BinOp("+", a, c.IntLit(rng.randint(1, self.size - 1))), c.Var("size"))
            else:
                b = c.IntLit(rng.randint(0, self.size - 1))
            payload = self.scalar() if rng.random() < 0.8 else c.sized_array(c.FLOAT, c.IntLit(rng.randint(0, 3)))
            return c.Message(a, b, payload, span=None)
        if kind == "broadcast":
            x = self.name("n")
            if rng.random() < 0.5:
                env[x] = "small"
                return c.Broadcast(self.rank(ranks), x, _SMALL(3))
            env[x] = "len"
            d = c.Refinement("y", c.natural(), c.And(c.Cmp("<=", c.Var("y"), c.IntLit(12)),
                             c.Cmp("=", c.BinOp("%", c.Var("y"), c.Var("size")), c.IntLit(0))))
            return c.Broadcast(self.rank(ranks), x, d)
        if kind == "scatter":
            if lens and rng.random() < 0.7:
                return c.Scatter(self.rank(ranks), c.sized_array(c.FLOAT, c.Var(rng.choice(lens))))
            return c.Scatter(self.rank(ranks), self.scalar())
        if kind == "gather":
            if lens and rng.random() < 0.7:
                return c.Gather(self.rank(ranks), c.sized_array(c.FLOAT, c.Var(rng.choice(lens))))
            return c.Gather(self.rank(ranks), self.scalar())
        if kind == "reduce":
            return c.Reduce(self.rank(ranks), rng.choice(REDUCE), rng.choice([c.INTEGER, c.FLOAT, c.natural()]))
        if kind == "allgather":
            x = self.name("g")
            env[x] = "array"
            return c.Allgather(x, self.scalar())
        if kind == "allreduce":
            x = self.name("r")
            env[x] = "value"
            return c.Allreduce(rng.choice(REDUCE), x, rng.choice([c.INTEGER, c.FLOAT]))
        if kind == "val":
            x = self.name("v")
            env[x] = "small"
            return c.Val(x, _SMALL(rng.randint(1, 3)))
        if kind == "foreach_rank":
            x = self.name("i")
            hi = c.BinOp("-", c.Var("size"), c.IntLit(1))
            return c.Foreach(x, c.IntLit(0), hi, self.items({**env, x: "rank"}, depth - 1, 3))
        if kind == "foreach_small":
            x = self.name("j")
            hi = c.Var(rng.choice(smalls)) if smalls else c.IntLit(rng.randint(0, 2))
            return c.Foreach(x, c.IntLit(1), hi, self.items({**env, x: "loop"}, depth - 1, 3))
        # choice over a collectively known small value, or over size
        if smalls:
            cond = c.Cmp(rng.choice(["<=", "=", ">"]), c.Var(rng.choice(smalls)), c.IntLit(rng.randint(0, 3)))
        else:
            cond = c.Cmp(rng.choice(["<=", ">="]), c.Var("size"), c.IntLit(rng.randint(2, 6)))
        orelse = self.items(env, depth - 1, 2) if rng.random() < 0.7 else c.Skip()
        return c.Choice(cond, self.items(env, depth - 1, 3), orelse)


def random_wellformed(rng: random.Random, size: int, depth=4, attempts=50) -> c.Protocol:
    """A protocol that passes the well-formedness check at ``size``."""
    from .wellformed import OK, check_size

    for _ in range(attempts):
        g = _WellFormed(rng, size)
        body = g.items({}, min(depth, 4) - 1, 4)
        p = c.Protocol(f"Gen{size}", c.Cmp(">=", c.Var("size"), c.IntLit(size)), body)
        if check_size(p, size).status == OK:
            return p
    raise RuntimeError(f"no well-formed protocol found at size {size} after {attempts} attempts")


def protocol_depth(t) -> int:
    """Nesting depth of a protocol term, counting foreach and choice levels."""
    match t:
        case c.Seq(items=items):
            return max((protocol_depth(i) for i in items), default=0)
        case c.Foreach(body=body):
            return 1 + protocol_depth(body)
        case c.Choice(then=a, orelse=b):
            return 1 + max(protocol_depth(a), protocol_depth(b))
        case c.Skip():
            return 0
    return 1


# ---------------------------------------------------------------- mutations


def _swappable(stmts):
    """Adjacent point-to-point statements whose exchange changes the program."""
    p2p = (pg.Send, pg.Recv)
    return [
        k
        for k in range(len(stmts) - 1)
        if isinstance(stmts[k], p2p) and isinstance(stmts[k + 1], p2p) and stmts[k] != stmts[k + 1]
    ]


def _blocks(stmts, path=()):
    """Every statement list in the program, with the path that reaches it."""
    yield path, stmts
    for k, s in enumerate(stmts):
        if isinstance(s, pg.If):
            yield from _blocks(s.then, path + ((k, "then"),))
            yield from _blocks(s.orelse, path + ((k, "orelse"),))
        elif isinstance(s, pg.For):
            yield from _blocks(s.body, path + ((k, "body"),))


def _rebuild(stmts, path, new_block):
    if not path:
        return new_block
    (k, attr), rest = path[0], path[1:]
    s = stmts[k]
    s = replace(s, **{attr: _rebuild(getattr(s, attr), rest, new_block)})
    return stmts[:k] + (s,) + stmts[k + 1:]


def mutation_sites(prog: pg.Program) -> list:
    return [(path, k) for path, block in _blocks(prog.body) for k in _swappable(block)]


def swap_send_recv(prog: pg.Program, rng: random.Random):
    """Swap two adjacent point-to-point statements; None when there are none."""
    sites = mutation_sites(prog)
    if not sites:
        return None
    path, k = rng.choice(sites)
    block = dict(_blocks(prog.body))[path]
    swapped = block[:k] + (block[k + 1], block[k]) + block[k + 2:]
    return replace(prog, body=_rebuild(prog.body, path, swapped))
