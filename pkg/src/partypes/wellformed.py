"""Bounded well-formedness checking.

A protocol is checked separately at every size in a range.  Loops are
expanded concretely.  A variable introduced by ``val`` or a collective is
tried with a few boundary inhabitants of its type (see ``witness_set``).
That choice is heuristic: it catches off-by-one rank errors but proves
nothing about values that are never tried.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

from . import core as c
from .core import eval_index, eval_prop, show_term
from .diagnostics import Diagnostic
from .errors import EvalError
from .project import MAX_RANGE
from .witness import witness, witness_set

EXCLUDED = "excluded-by-precondition"
OK = "ok"
ERROR = "error"

# up to this many binder sites every combination of witnesses is tried
MAX_PRODUCT_SITES = 3


@dataclass(frozen=True)
class SizeRange:
    min: int = 1
    max: int = 16

    def __post_init__(self):
        if not (isinstance(self.min, int) and isinstance(self.max, int)):
            raise ValueError("size bounds must be integers")
        if self.min < 1 or self.max < self.min:
            raise ValueError(f"bad size range {self.min}..{self.max}")

    def __iter__(self):
        return iter(range(self.min, self.max + 1))

    @classmethod
    def parse(cls, text: str) -> SizeRange:
        lo, sep, hi = text.partition("..")
        try:
            if not sep:
                return cls(int(lo), int(lo))
            return cls(int(lo), int(hi))
        except ValueError as e:
            raise ValueError(f"bad size range '{text}': expected A..B") from e


@dataclass
class SizeVerdict:
    size: int
    status: str  # ok | error | excluded-by-precondition
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == OK

    def to_dict(self):
        return {"size": self.size, "status": self.status, "diagnostics": [d.to_dict() for d in self.diagnostics]}


@dataclass
class WellformednessReport:
    protocol: str
    verdicts: list  # [SizeVerdict], ascending size
    inferred_min_size: Optional[int] = None

    @property
    def checked_sizes(self):
        return [v.size for v in self.verdicts]

    @property
    def ok(self):
        return all(v.status != ERROR for v in self.verdicts)

    def verdict(self, size) -> SizeVerdict:
        for v in self.verdicts:
            if v.size == size:
                return v
        raise KeyError(size)

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "checkedSizes": self.checked_sizes,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "inferredMinSize": self.inferred_min_size,
            "ok": self.ok,
        }


def binder_sites(term) -> list:
    """Binder nodes in syntactic order; each gets its own witness choice."""
    out = []

    def walk(t):
        match t:
            case c.Seq(items=items):
                for x in items:
                    walk(x)
            case c.Foreach(body=body):
                walk(body)
            case c.Choice(then=a, orelse=b):
                walk(a)
                walk(b)
            case _ if isinstance(t, c.BINDERS):
                out.append(t)

    walk(term)
    return out


class _Walker:
    def __init__(self, size, choice):
        self.size = size
        self.choice = choice  # id(binder node) -> witness index
        self.diags = {}

    def report(self, code, message, span, severity="error"):
        key = (code, span)
        if key not in self.diags:
            self.diags[key] = Diagnostic(severity, code, f"{message} (size {self.size})", span)

    def eval(self, t, env, node):
        try:
            return eval_index(t, env)
        except EvalError as e:
            self.report("eval-error", str(e), node.span)
            return None

    def rank(self, t, env, node, what):
        v = self.eval(t, env, node)
        if v is None:
            return None
        if not c.is_int(v):
            self.report("eval-error", f"{what} {show_term(t)} is not an integer", node.span)
            return None
        if not 0 <= v < self.size:
            code = "root-out-of-range" if what == "root" else "rank-out-of-range"
            self.report(code, f"{what} {show_term(t)} = {v} is outside 0..{self.size - 1}", node.span)
            return None
        return v

    def payload(self, d, env, node, multiple_of=None):
        """A value inhabiting ``d``; reports types that cannot be evaluated or are empty."""
        try:
            return witness(d, env, multiple_of=multiple_of)
        except EvalError as e:
            if type(e).__name__ == "NoWitness":
                self.report("empty-type", f"no inhabitant of {c.show_type(d)} found: {e}", node.span, "warning")
            else:
                self.report("eval-error", f"payload {c.show_type(d)}: {e}", node.span)
            return None

    def bind(self, node, d, env, bound_of=lambda v: v):
        try:
            options = witness_set(d, env)
        except EvalError as e:
            self.report("eval-error", f"payload {c.show_type(d)}: {e}", node.span)
            return None
        if not options:
            self.report("empty-type", f"no inhabitant of {c.show_type(d)} found", node.span, "warning")
            return None
        v = options[self.choice.get(id(node), 0) % len(options)]
        try:
            return bound_of(v)
        except EvalError as e:
            self.report("eval-error", str(e), node.span)
            return None

    def items(self, term, env):
        env = dict(env)
        for t in c.seq_items(term):
            if not self.item(t, env):
                return False
        return True

    def item(self, t, env) -> bool:
        """Check one item, extending ``env`` with its binder.  False stops the
        enclosing sequence because later items would see an unbound name."""
        size = self.size
        match t:
            case c.Skip():
                pass
            case c.Message(frm=f, to=to, payload=d):
                a = self.rank(f, env, t, "message source")
                b = self.rank(to, env, t, "message destination")
                if a is not None and a == b:
                    self.report("self-message", f"message from rank {a} to itself", t.span)
                self.payload(d, env, t)
            case c.Broadcast(root=r, var=x, payload=d):
                self.rank(r, env, t, "root")
                v = self.bind(t, d, env)
                if v is None:
                    return False
                env[x] = v
            case c.Scatter(root=r, payload=d) | c.Gather(root=r, payload=d):
                self.rank(r, env, t, "root")
                self.payload(d, env, t)
            case c.Reduce(root=r, payload=d):
                self.rank(r, env, t, "root")
                self.payload(d, env, t)
            case c.Allgather(var=x, payload=d):
                chunked = c.base_kind(d) == "array"
                v = self.bind(t, d, env, lambda w: w if chunked else (w,) * size)
                if v is None:
                    return False
                env[x] = v
            case c.Allreduce(op=op, var=x, payload=d):
                v = self.bind(t, d, env, lambda w: c.fold_values(op, [w] * size))
                if v is None:
                    return False
                env[x] = v
            case c.Val(var=x, payload=d):
                v = self.bind(t, d, env)
                if v is None:
                    return False
                env[x] = v
            case c.Foreach(var=x, lo=lo, hi=hi, body=body):
                a = self.eval(lo, env, t)
                b = self.eval(hi, env, t)
                if a is None or b is None:
                    return True
                if not (c.is_int(a) and c.is_int(b)):
                    self.report("eval-error", "foreach bounds must be integers", t.span)
                    return True
                if b - a + 1 > MAX_RANGE:
                    self.report("range-too-large", f"range {a} .. {b} too large for bounded checking", t.span)
                    return True
                if b < a:
                    return True
                if x not in c.free_vars(body) and not binder_sites(body):
                    # every iteration is identical
                    self.items(body, {**env, x: a})
                    return True
                for i in range(a, b + 1):
                    self.items(body, {**env, x: i})
            case c.Choice(cond=cond, then=a, orelse=b):
                try:
                    taken = eval_prop(cond, env)
                except EvalError as e:
                    self.report("eval-error", f"choice condition: {e}", t.span)
                    return True
                self.items(a if taken else b, env)
            case c.Seq():
                # nested sequences are transparent to scope
                for x in c.seq_items(t):
                    if not self.item(x, env):
                        return False
            case _:
                raise TypeError(f"not a protocol term: {t!r}")
        return True


def _witness_plans(sites):
    """Witness choices to try.  Few sites get every combination; otherwise
    all-smallest, all-second, all-largest, plus each site varied alone."""
    if not sites:
        return [{}]
    ids = [id(s) for s in sites]
    if len(ids) <= MAX_PRODUCT_SITES:
        return [dict(zip(ids, combo)) for combo in itertools.product(range(3), repeat=len(ids))]
    plans = [{i: j for i in ids} for j in range(3)]
    for i in ids:
        for j in (1, 2):
            plans.append({**{k: 0 for k in ids}, i: j})
    return plans


def check_size(p: c.Protocol, size: int) -> SizeVerdict:
    """Verdict for one size, including the header proposition."""
    try:
        admitted = eval_prop(p.size_prop, {"size": size})
    except EvalError as e:
        d = Diagnostic("error", "eval-error", f"size proposition: {e} (size {size})", p.size_prop.span)
        return SizeVerdict(size, ERROR, [d])
    if not admitted:
        return SizeVerdict(size, EXCLUDED)
    body = c.normalize(p.body)
    seen = {}
    for plan in _witness_plans(binder_sites(body)):
        w = _Walker(size, plan)
        w.items(body, {"size": size})
        for key, d in w.diags.items():
            seen.setdefault(key, d)
    diags = list(seen.values())
    status = ERROR if any(d.severity == "error" for d in diags) else OK
    return SizeVerdict(size, status, diags)


def check_protocol(p: c.Protocol, r: SizeRange = SizeRange(), infer=True) -> WellformednessReport:
    verdicts = [check_size(p, s) for s in r]
    inferred = infer_min_size(p, r) if infer else None
    return WellformednessReport(p.name, verdicts, inferred)


def infer_min_size(p: c.Protocol, r: SizeRange = SizeRange()) -> Optional[int]:
    """Smallest s such that the body is well formed at every size in s..r.max
    when the header is ignored; None if even r.max fails."""
    open_p = replace(p, size_prop=c.PTrue())
    best = None
    for s in reversed(range(r.min, r.max + 1)):
        if check_size(open_p, s).status != OK:
            break
        best = s
    return best


def format_report(report: WellformednessReport) -> str:
    lines = [f"protocol {report.protocol}"]
    for v in report.verdicts:
        lines.append(f"  size {v.size}: {v.status}")
        lines.extend(f"    {d}" for d in v.diagnostics)
    if report.inferred_min_size is not None:
        lines.append(f"inferred minimum size: {report.inferred_min_size}")
    else:
        lines.append("inferred minimum size: none in range")
    return "\n".join(lines) + "\n"
