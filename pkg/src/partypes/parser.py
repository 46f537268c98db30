"""Recursive-descent parsers for protocol (``.pt``) and program (``.mpp``) text.

Both languages share one lexer.  Failures raise ``ParseError`` carrying one
or more ``Diagnostic`` objects with source spans.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from . import core as c
from . import program as pg
from .diagnostics import Diagnostic, SourceSpan
from .errors import ParseError

KEYWORDS = {
    "protocol", "message", "broadcast", "scatter", "gather", "reduce", "allgather",
    "allreduce", "foreach", "if", "else", "val", "integer", "float", "natural",
    "positive", "true", "false", "and", "or", "not", "max", "min", "sum", "length",
    "let", "for", "in", "send", "recv", "apply", "extern",
}
RESERVED_NAMES = ("size", "rank")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\f\v]+|\r?\n|\r)
  | (?P<comment>//[^\r\n]*)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\.\.|<=|>=|!=|[-+*/%<>=(){}\[\],:|;])
    """,
    re.VERBOSE,
)

_CMP = {"<=", "<", "=", ">=", ">", "!="}


@dataclass(frozen=True)
class Token:
    kind: str  # int, float, ident, kw, op, eof
    text: str
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self):
        return "end of input" if self.kind == "eof" else repr(self.text)


class _Abort(Exception):
    pass


def tokenize(text: str, file: str = "<string>"):
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            span = SourceSpan(file, line, col, line, col)
            raise ParseError([Diagnostic("error", "lex-error", f"unexpected character {text[pos]!r}", span)])
        kind = m.lastgroup
        s = m.group()
        if kind == "ws" and ("\n" in s or "\r" in s):
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                if kind == "ident" and s in KEYWORDS:
                    kind = "kw"
                tokens.append(Token(kind, s, line, col, line, col + len(s) - 1))
            col += len(s)
        pos = m.end()
    last_line, last_col = line, max(col - 1, 1)
    if tokens and col == 1:
        last_line, last_col = tokens[-1].end_line, tokens[-1].end_col
    tokens.append(Token("eof", "", last_line, last_col, last_line, last_col))
    return tokens


class _Parser:
    def __init__(self, text, file):
        self.file = file
        self.toks = tokenize(text, file)
        self.pos = 0
        self.diags = []

    # -- token plumbing

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, *texts) -> bool:
        t = self.tok
        return t.kind in ("kw", "op") and t.text in texts

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def accept(self, text) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text) -> Token:
        if not self.at(text):
            self.fail(f"expected '{text}', found {self.tok}")
        return self.advance()

    def ident(self, what="identifier") -> Token:
        if self.tok.kind != "ident":
            self.fail(f"expected {what}, found {self.tok}")
        return self.advance()

    def span_of(self, t: Token) -> SourceSpan:
        return SourceSpan(self.file, t.line, t.col, t.end_line, t.end_col)

    def span_from(self, start: Token) -> SourceSpan:
        end = self.toks[self.pos - 1] if self.pos > 0 else start
        if (end.line, end.col) < (start.line, start.col):
            end = start
        return SourceSpan(self.file, start.line, start.col, end.end_line, end.end_col)

    def fail(self, message, code="syntax-error", token=None):
        t = token or self.tok
        code = "unexpected-eof" if t.kind == "eof" and code == "syntax-error" else code
        self.diags.append(Diagnostic("error", code, message, self.span_of(t)))
        raise _Abort

    def error(self, code, message, span):
        self.diags.append(Diagnostic("error", code, message, span))

    # -- index terms

    def iterm(self):
        start = self.tok
        left = self.iterm_mul()
        while self.at("+", "-"):
            op = self.advance().text
            right = self.iterm_mul()
            left = c.BinOp(op, left, right, span=self.span_from(start))
        return left

    def iterm_mul(self):
        start = self.tok
        left = self.iterm_unary()
        while self.at("*", "/", "%"):
            op = self.advance().text
            right = self.iterm_unary()
            left = c.BinOp(op, left, right, span=self.span_from(start))
        return left

    def iterm_unary(self):
        start = self.tok
        if self.accept("-"):
            arg = self.iterm_unary()
            span = self.span_from(start)
            if isinstance(arg, c.IntLit):
                return c.IntLit(-arg.value, span=span)
            if isinstance(arg, c.ValueLit) and not c.is_array(arg.value):
                return c.ValueLit(-arg.value, span=span)
            return c.BinOp("-", c.IntLit(0, span=span), arg, span=span)
        return self.iterm_postfix()

    def iterm_postfix(self):
        start = self.tok
        t = self.iterm_primary()
        while self.at("["):
            self.advance()
            i = self.iterm()
            self.expect("]")
            t = c.Index(t, i, span=self.span_from(start))
        return t

    def iterm_primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return c.IntLit(int(t.text), span=self.span_of(t))
        if t.kind == "float":
            self.advance()
            return c.ValueLit(float(t.text), span=self.span_of(t))
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                self.fail(f"unknown function '{t.text}' in index term", token=t)
            return c.Var(t.text, span=self.span_of(t))
        if self.at("max", "min"):
            self.advance()
            self.expect("(")
            a = self.iterm()
            self.expect(",")
            b = self.iterm()
            self.expect(")")
            return c.BinOp(t.text, a, b, span=self.span_from(t))
        if self.at("length"):
            self.advance()
            self.expect("(")
            a = self.iterm()
            self.expect(")")
            return c.Length(a, span=self.span_from(t))
        if self.accept("("):
            inner = self.iterm()
            self.expect(")")
            return inner
        self.fail(f"expected an index term, found {t}")

    # -- propositions

    def prop(self):
        start = self.tok
        left = self.prop_and()
        while self.accept("or"):
            left = c.Or(left, self.prop_and(), span=self.span_from(start))
        return left

    def prop_and(self):
        start = self.tok
        left = self.prop_not()
        while self.accept("and"):
            left = c.And(left, self.prop_not(), span=self.span_from(start))
        return left

    def prop_not(self):
        start = self.tok
        if self.accept("not"):
            return c.Not(self.prop_not(), span=self.span_from(start))
        return self.prop_atom()

    def prop_atom(self):
        start = self.tok
        if self.accept("true"):
            return c.PTrue(span=self.span_of(start))
        if self.accept("false"):
            return c.Not(c.PTrue(span=self.span_of(start)), span=self.span_of(start))
        if start.kind == "ident" and self.peek().text == "(":
            self.fail(
                f"uninterpreted predicate '{start.text}' is not supported",
                code="uninterpreted-predicate",
                token=start,
            )
        if self.at("("):
            saved, ndiags = self.pos, len(self.diags)
            try:
                self.advance()
                inner = self.prop()
                self.expect(")")
                if not (self.tok.kind == "op" and self.tok.text in _CMP | {"+", "-", "*", "/", "%", "["}):
                    return inner
            except _Abort:
                pass
            self.pos = saved
            del self.diags[ndiags:]
        left = self.iterm()
        if not (self.tok.kind == "op" and self.tok.text in _CMP):
            self.fail(f"expected a comparison operator, found {self.tok}")
        op = self.advance().text
        right = self.iterm()
        return c.Cmp(op, left, right, span=self.span_from(start))

    # -- datatypes

    def dtype(self):
        start = self.tok
        d = self.dtype_primary()
        while self.at("["):
            self.advance()
            if self.accept("]"):
                d = c.ArrayT(d, span=self.span_from(start))
            else:
                n = self.iterm()
                self.expect("]")
                d = c.sized_array(d, n)
                d = c.Refinement(d.var, d.base, d.prop, span=self.span_from(start))
        return d

    def dtype_primary(self):
        t = self.tok
        if self.accept("integer"):
            return c.IntegerT(span=self.span_of(t))
        if self.accept("float"):
            return c.FloatT(span=self.span_of(t))
        if self.accept("natural"):
            d = c.natural()
            return c.Refinement(d.var, d.base, d.prop, span=self.span_of(t))
        if self.accept("positive"):
            d = c.positive()
            return c.Refinement(d.var, d.base, d.prop, span=self.span_of(t))
        if self.accept("{"):
            var = self.ident("refinement variable")
            self.expect(":")
            base = self.dtype()
            self.expect("|")
            p = self.prop()
            self.expect("}")
            return c.Refinement(var.text, base, p, span=self.span_from(t))
        self.fail(f"expected a datatype, found {t}")

    def reduce_op(self):
        if not self.at(*c.REDUCE_OPS):
            self.fail(f"expected a reduce operation (max, min, sum), found {self.tok}")
        return self.advance().text

    # -- protocols

    def protocol(self):
        start = self.expect("protocol")
        name = self.ident("protocol name").text
        self.expect("(")
        size_prop = self.prop()
        self.expect(")")
        body = self.block()
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok} after protocol")
        return c.Protocol(name, size_prop, body, span=self.span_from(start))

    def block(self):
        start = self.expect("{")
        items = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.fail("unterminated block: expected '}'")
            if self.accept(";"):
                continue
            items.append(self.item())
        self.expect("}")
        return c.normalize(c.Seq(tuple(items), span=self.span_from(start)))

    def item(self):
        t = self.tok
        if self.accept("message"):
            frm = self.iterm()
            self.expect(",")
            to = self.iterm()
            d = self.dtype()
            return c.Message(frm, to, d, span=self.span_from(t))
        if self.accept("broadcast"):
            root = self.iterm()
            var = self.ident("variable name").text
            self.expect(":")
            return c.Broadcast(root, var, self.dtype(), span=self.span_from(t))
        if self.at("scatter", "gather"):
            self.advance()
            root = self.iterm()
            d = self.dtype()
            cls = c.Scatter if t.text == "scatter" else c.Gather
            return cls(root, d, span=self.span_from(t))
        if self.accept("reduce"):
            root = self.iterm()
            op = self.reduce_op()
            return c.Reduce(root, op, self.dtype(), span=self.span_from(t))
        if self.accept("allgather"):
            var = self.ident("variable name").text
            self.expect(":")
            return c.Allgather(var, self.dtype(), span=self.span_from(t))
        if self.accept("allreduce"):
            op = self.reduce_op()
            var = self.ident("variable name").text
            self.expect(":")
            return c.Allreduce(op, var, self.dtype(), span=self.span_from(t))
        if self.accept("val"):
            var = self.ident("variable name").text
            self.expect(":")
            return c.Val(var, self.dtype(), span=self.span_from(t))
        if self.accept("foreach"):
            var = self.ident("loop variable").text
            self.expect(":")
            lo = self.iterm()
            self.expect("..")
            hi = self.iterm()
            body = self.block()
            return c.Foreach(var, lo, hi, body, span=self.span_from(t))
        if self.accept("if"):
            self.expect("(")
            cond = self.prop()
            self.expect(")")
            then = self.block()
            orelse = c.Skip()
            if self.accept("else"):
                orelse = self.item() if self.at("if") else self.block()
            return c.Choice(cond, then, orelse, span=self.span_from(t))
        if self.at("{"):
            return self.block()
        self.fail(f"expected a protocol item, found {t}")

    # -- programs

    def program(self):
        start = self.tok
        externs, body = [], []
        while self.tok.kind != "eof":
            if self.accept(";"):
                continue
            if self.at("extern"):
                t = self.advance()
                name = self.ident("extern name").text
                d = None
                if self.accept(":"):
                    d = self.dtype()
                if body:
                    self.error("extern-position", "extern declarations must precede statements", self.span_from(t))
                externs.append((name, d))
                continue
            body.append(self.stmt())
        return pg.Program(tuple(externs), tuple(body), span=self.span_from(start))

    def stmt_block(self):
        self.expect("{")
        out = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.fail("unterminated block: expected '}'")
            if self.accept(";"):
                continue
            if self.at("extern"):
                self.fail("extern declarations are only allowed at top level")
            out.append(self.stmt())
        self.expect("}")
        return tuple(out)

    def stmt(self):
        t = self.tok
        if self.accept("let"):
            name = self.ident("variable name").text
            self.expect("=")
            return self.rhs(pg.Target(name, True), t, lambda v: pg.Let(name, v, span=self.span_from(t)))
        if self.accept("if"):
            return self.if_stmt(t)
        if self.accept("for"):
            var = self.ident("loop variable").text
            self.expect("in")
            lo = self.expr()
            self.expect("..")
            hi = self.expr()
            body = self.stmt_block()
            return pg.For(var, lo, hi, body, span=self.span_from(t))
        if self.accept("send"):
            self.expect("(")
            to = self.expr()
            self.expect(",")
            v = self.expr()
            self.expect(")")
            return pg.Send(to, v, span=self.span_from(t))
        if self.accept("apply"):
            self.expect("(")
            v = self.expr()
            self.expect(")")
            return pg.Apply(v, span=self.span_from(t))
        if self.at("recv", "broadcast", "scatter", "gather", "reduce", "allgather", "allreduce"):
            return self.comm(None, t)
        if t.kind == "ident":
            self.advance()
            if self.accept("["):
                idx = self.expr()
                self.expect("]")
                self.expect("=")
                v = self.expr()
                return pg.AssignIndex(t.text, idx, v, span=self.span_from(t))
            self.expect("=")
            return self.rhs(pg.Target(t.text, False), t, lambda v: pg.Assign(t.text, v, span=self.span_from(t)))
        self.fail(f"expected a statement, found {t}")

    def if_stmt(self, t):
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.stmt_block()
        orelse = ()
        if self.accept("else"):
            if self.at("if"):
                nested = self.advance()
                orelse = (self.if_stmt(nested),)
            else:
                orelse = self.stmt_block()
        return pg.If(cond, then, orelse, span=self.span_from(t))

    def rhs(self, target, start, make_plain):
        if self.at("recv", "broadcast", "scatter", "gather", "reduce", "allgather", "allreduce"):
            return self.comm(target, start)
        return make_plain(self.expr())

    def comm(self, target, start):
        kind = self.advance().text
        self.expect("(")
        if kind == "recv":
            frm = self.expr()
            self.expect(")")
            return pg.Recv(target, frm, span=self.span_from(start))
        if kind in ("broadcast", "scatter", "gather"):
            root = self.expr()
            self.expect(",")
            v = self.expr()
            self.expect(")")
            cls = {"broadcast": pg.Broadcast, "scatter": pg.Scatter, "gather": pg.Gather}[kind]
            return cls(target, root, v, span=self.span_from(start))
        if kind == "reduce":
            root = self.expr()
            self.expect(",")
            op = self.reduce_op()
            self.expect(",")
            v = self.expr()
            self.expect(")")
            return pg.Reduce(target, root, op, v, span=self.span_from(start))
        if kind == "allgather":
            v = self.expr()
            self.expect(")")
            return pg.Allgather(target, v, span=self.span_from(start))
        op = self.reduce_op()
        self.expect(",")
        v = self.expr()
        self.expect(")")
        return pg.Allreduce(target, op, v, span=self.span_from(start))

    # -- program expressions

    def expr(self):
        start = self.tok
        left = self.expr_and()
        while self.accept("or"):
            left = pg.Binary("or", left, self.expr_and(), span=self.span_from(start))
        return left

    def expr_and(self):
        start = self.tok
        left = self.expr_not()
        while self.accept("and"):
            left = pg.Binary("and", left, self.expr_not(), span=self.span_from(start))
        return left

    def expr_not(self):
        start = self.tok
        if self.accept("not"):
            return pg.Unary("not", self.expr_not(), span=self.span_from(start))
        return self.expr_cmp()

    def expr_cmp(self):
        start = self.tok
        left = self.expr_add()
        if self.tok.kind == "op" and self.tok.text in _CMP:
            op = self.advance().text
            left = pg.Binary(op, left, self.expr_add(), span=self.span_from(start))
        return left

    def expr_add(self):
        start = self.tok
        left = self.expr_mul()
        while self.at("+", "-"):
            op = self.advance().text
            left = pg.Binary(op, left, self.expr_mul(), span=self.span_from(start))
        return left

    def expr_mul(self):
        start = self.tok
        left = self.expr_unary()
        while self.at("*", "/", "%"):
            op = self.advance().text
            left = pg.Binary(op, left, self.expr_unary(), span=self.span_from(start))
        return left

    def expr_unary(self):
        start = self.tok
        if self.accept("-"):
            arg = self.expr_unary()
            span = self.span_from(start)
            if isinstance(arg, pg.Num):
                return pg.Num(-arg.value, span=span)
            return pg.Unary("-", arg, span=span)
        return self.expr_postfix()

    def expr_postfix(self):
        start = self.tok
        e = self.expr_primary()
        while self.at("["):
            self.advance()
            i = self.expr()
            self.expect("]")
            e = pg.Subscript(e, i, span=self.span_from(start))
        return e

    def expr_primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return pg.Num(int(t.text), span=self.span_of(t))
        if t.kind == "float":
            self.advance()
            return pg.Num(float(t.text), span=self.span_of(t))
        if self.accept("true") or self.accept("false"):
            return pg.Bool(t.text == "true", span=self.span_of(t))
        if (t.kind == "ident" or self.at("max", "min", "length", "float")) and self.peek().text == "(":
            self.advance()
            self.advance()
            args = []
            if not self.at(")"):
                args.append(self.expr())
                while self.accept(","):
                    args.append(self.expr())
            self.expect(")")
            if t.text not in pg.BUILTINS:
                self.fail(f"unknown function '{t.text}'", code="unknown-function", token=t)
            if len(args) != pg.BUILTINS[t.text]:
                self.fail(f"'{t.text}' expects {pg.BUILTINS[t.text]} argument(s), got {len(args)}", token=t)
            return pg.Call(t.text, tuple(args), span=self.span_from(t))
        if t.kind == "ident":
            self.advance()
            return pg.Var(t.text, span=self.span_of(t))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("["):
            items = []
            if not self.at("]"):
                items.append(self.expr())
                while self.accept(","):
                    items.append(self.expr())
            self.expect("]")
            return pg.ArrayLit(tuple(items), span=self.span_from(t))
        self.fail(f"expected an expression, found {t}")


# ------------------------------------------------------------------ scoping


class _ProtocolScopes:
    def __init__(self, diags):
        self.diags = diags

    def err(self, code, msg, span):
        self.diags.append(Diagnostic("error", code, msg, span))

    def binder(self, name, bound, span, local=False):
        if name in RESERVED_NAMES:
            self.err("reserved-binder", f"'{name}' cannot be rebound", span)
        elif name in bound and not local:
            self.err("shadowed-binder", f"'{name}' is already bound", span)

    def uses(self, node, bound):
        match node:
            case c.Var(name=name):
                if name == "rank":
                    self.err("rank-in-protocol", "'rank' is not available in protocols", node.span)
                elif name not in bound:
                    self.err("unbound-variable", f"unbound variable '{name}'", node.span)
            case c.IntLit() | c.ValueLit() | c.PTrue() | c.IntegerT() | c.FloatT():
                pass
            case c.BinOp(left=a, right=b) | c.Cmp(left=a, right=b) | c.And(left=a, right=b) | c.Or(left=a, right=b):
                self.uses(a, bound)
                self.uses(b, bound)
            case c.Length(arg=a) | c.Not(arg=a):
                self.uses(a, bound)
            case c.Index(array=a, index=i):
                self.uses(a, bound)
                self.uses(i, bound)
            case c.ArrayT(elem=elem, length=length):
                self.uses(elem, bound)
                if length is not None:
                    self.uses(length, bound)
            case c.Refinement(var=var, base=base, prop=prop):
                self.uses(base, bound)
                self.binder(var, bound, node.span, local=True)
                self.uses(prop, bound | {var})

    def term(self, node, bound):
        match node:
            case c.Skip():
                pass
            case c.Message(frm=f, to=t, payload=d):
                self.uses(f, bound)
                self.uses(t, bound)
                self.uses(d, bound)
            case c.Broadcast(root=root, var=var, payload=d):
                self.uses(root, bound)
                self.binder(var, bound, node.span)
                self.uses(d, bound | {var})
            case c.Scatter(root=root, payload=d) | c.Gather(root=root, payload=d) | c.Reduce(root=root, payload=d):
                self.uses(root, bound)
                self.uses(d, bound)
            case c.Allgather(var=var, payload=d) | c.Allreduce(var=var, payload=d) | c.Val(var=var, payload=d):
                self.binder(var, bound, node.span)
                self.uses(d, bound | {var})
            case c.Seq(items=items):
                for item in items:
                    self.term(item, bound)
                    bound = bound | c.bound_names(item)
            case c.Foreach(var=var, lo=lo, hi=hi, body=body):
                self.uses(lo, bound)
                self.uses(hi, bound)
                self.binder(var, bound, node.span)
                self.term(body, bound | {var})
            case c.Choice(cond=cond, then=a, orelse=b):
                self.uses(cond, bound)
                self.term(a, bound)
                self.term(b, bound)


class _ProgramScopes:
    def __init__(self, diags):
        self.diags = diags

    def err(self, code, msg, span):
        self.diags.append(Diagnostic("error", code, msg, span))

    def expr(self, e, scope):
        match e:
            case pg.Var(name=name):
                if not any(name in s for s in scope):
                    self.err("unbound-variable", f"unbound variable '{name}'", e.span)
            case pg.Num() | pg.Bool():
                pass
            case pg.Binary(left=a, right=b) | pg.Subscript(array=a, index=b):
                self.expr(a, scope)
                self.expr(b, scope)
            case pg.Unary(arg=a):
                self.expr(a, scope)
            case pg.Call(args=args) | pg.ArrayLit(items=args):
                for a in args:
                    self.expr(a, scope)

    def declare(self, name, scope, span):
        if name in RESERVED_NAMES:
            self.err("reserved-binder", f"'{name}' cannot be rebound", span)
        scope[-1].add(name)

    def assign(self, name, scope, span):
        if name in RESERVED_NAMES:
            self.err("readonly-assignment", f"'{name}' is read-only", span)
        elif not any(name in s for s in scope):
            self.err("unbound-variable", f"assignment to undeclared variable '{name}'", span)

    def target(self, target, scope, span):
        if target is None:
            return
        if target.declare:
            self.declare(target.name, scope, span)
        else:
            self.assign(target.name, scope, span)

    def block(self, stmts, scope):
        scope = scope + [set()]
        for s in stmts:
            self.stmt(s, scope)

    def stmt(self, s, scope):
        match s:
            case pg.Let(name=name, value=v):
                self.expr(v, scope)
                self.declare(name, scope, s.span)
            case pg.Assign(name=name, value=v):
                self.expr(v, scope)
                self.assign(name, scope, s.span)
            case pg.AssignIndex(name=name, index=i, value=v):
                self.expr(i, scope)
                self.expr(v, scope)
                self.assign(name, scope, s.span)
            case pg.If(cond=cond, then=a, orelse=b):
                self.expr(cond, scope)
                self.block(a, scope)
                self.block(b, scope)
            case pg.For(var=var, lo=lo, hi=hi, body=body):
                self.expr(lo, scope)
                self.expr(hi, scope)
                if var in RESERVED_NAMES:
                    self.err("reserved-binder", f"'{var}' cannot be rebound", s.span)
                self.block(body, scope + [{var}])
            case pg.Send(to=a, value=b):
                self.expr(a, scope)
                self.expr(b, scope)
            case pg.Apply(value=v):
                self.expr(v, scope)
            case pg.Recv(target=target, frm=f):
                self.expr(f, scope)
                self.target(target, scope, s.span)
            case pg.Broadcast(target=t, root=r, value=v) | pg.Scatter(target=t, root=r, value=v) | pg.Gather(
                target=t, root=r, value=v
            ) | pg.Reduce(target=t, root=r, value=v):
                self.expr(r, scope)
                self.expr(v, scope)
                self.target(t, scope, s.span)
            case pg.Allgather(target=t, value=v) | pg.Allreduce(target=t, value=v):
                self.expr(v, scope)
                self.target(t, scope, s.span)


# ------------------------------------------------------------------- entry


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n")


def parse_protocol(text: str, file: str = "<string>") -> c.Protocol:
    p = _Parser(_normalize_newlines(text), file)
    try:
        proto = p.protocol()
    except _Abort:
        raise ParseError(p.diags) from None
    diags = list(p.diags)
    scopes = _ProtocolScopes(diags)
    scopes.uses(proto.size_prop, {"size"})
    scopes.term(proto.body, {"size"})
    if diags:
        raise ParseError(diags)
    return proto


def parse_program(text: str, file: str = "<string>") -> pg.Program:
    p = _Parser(_normalize_newlines(text), file)
    try:
        prog = p.program()
    except _Abort:
        raise ParseError(p.diags) from None
    diags = list(p.diags)
    scopes = _ProgramScopes(diags)
    top = {"rank", "size"}
    for name, d in prog.externs:
        if name in RESERVED_NAMES:
            scopes.err("reserved-binder", f"'{name}' cannot be rebound", prog.span)
        if d is not None:
            _ProtocolScopes(diags).uses(d, {"size"} | {n for n, _ in prog.externs})
        top.add(name)
    scopes.block(prog.body, [top])
    if diags:
        raise ParseError(diags)
    return prog


def parse_protocol_file(path) -> c.Protocol:
    with open(path, encoding="utf-8") as f:
        return parse_protocol(f.read(), str(path))


def parse_program_file(path) -> pg.Program:
    with open(path, encoding="utf-8") as f:
        return parse_program(f.read(), str(path))
