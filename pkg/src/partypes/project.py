"""Per-rank projection of a global protocol.

A ``LocalState`` is the residual protocol seen from one rank.  ``project_head``
finds the next action the rank must perform, skipping messages that do not
involve it and expanding ``foreach`` eagerly; ``advance`` consumes that action.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional

from . import core as c
from .core import alpha_equal, base_kind, eval_index, eval_prop, fold_values, show_type, show_value
from .errors import EvalError, ProtocolMismatch, RefinementViolation
from .witness import witness

MAX_RANGE = 10**5


# ------------------------------------------------------------------- actions


@dataclass(frozen=True)
class SendA:
    to: int
    payload: c.Datatype

    def __str__(self):
        return f"send {self.to} : {show_type(self.payload)}"


@dataclass(frozen=True)
class RecvA:
    frm: int
    payload: c.Datatype

    def __str__(self):
        return f"recv {self.frm} : {show_type(self.payload)}"


@dataclass(frozen=True)
class BcastA:
    root: int
    var: str
    payload: c.Datatype

    def __str__(self):
        return f"broadcast {self.root} {self.var} : {show_type(self.payload)}"


@dataclass(frozen=True)
class ScatterA:
    root: int
    payload: c.Datatype

    def __str__(self):
        return f"scatter {self.root} : {show_type(self.payload)}"


@dataclass(frozen=True)
class GatherA:
    root: int
    payload: c.Datatype

    def __str__(self):
        return f"gather {self.root} : {show_type(self.payload)}"


@dataclass(frozen=True)
class ReduceA:
    root: int
    op: str
    payload: c.Datatype

    def __str__(self):
        return f"reduce {self.root} {self.op} : {show_type(self.payload)}"


@dataclass(frozen=True)
class AllgatherA:
    var: str
    payload: c.Datatype

    def __str__(self):
        return f"allgather {self.var} : {show_type(self.payload)}"


@dataclass(frozen=True)
class AllreduceA:
    op: str
    var: str
    payload: c.Datatype

    def __str__(self):
        return f"allreduce {self.op} {self.var} : {show_type(self.payload)}"


@dataclass(frozen=True)
class ApplyA:
    var: str
    payload: c.Datatype

    def __str__(self):
        return f"apply {self.var} : {show_type(self.payload)}"


@dataclass(frozen=True)
class EnterChoiceA:
    taken: str  # "then" | "else"

    def __str__(self):
        return f"choice {self.taken}"


LocalAction = object
COLLECTIVE_ACTIONS = (BcastA, ScatterA, GatherA, ReduceA, AllgatherA, AllreduceA)
BINDING_ACTIONS = (BcastA, AllgatherA, AllreduceA, ApplyA)

_KIND = {
    SendA: "send", RecvA: "recv", BcastA: "broadcast", ScatterA: "scatter", GatherA: "gather",
    ReduceA: "reduce", AllgatherA: "allgather", AllreduceA: "allreduce", ApplyA: "apply",
    EnterChoiceA: "choice",
}


def action_kind(a) -> str:
    return _KIND[type(a)]


def action_to_dict(a) -> dict:
    out = {"kind": action_kind(a)}
    for name in ("to", "frm", "root", "op", "var", "taken"):
        if hasattr(a, name):
            out["from" if name == "frm" else name] = getattr(a, name)
    if hasattr(a, "payload"):
        out["payload"] = show_type(a.payload)
    return out


def actions_match(expected, offered) -> bool:
    """Structural equality: kind, ranks, op, and alpha-equal payloads."""
    if type(expected) is not type(offered):
        return False
    for name in ("to", "frm", "root", "op", "taken"):
        if getattr(expected, name, None) != getattr(offered, name, None):
            return False
    if hasattr(expected, "payload"):
        return alpha_equal(expected.payload, offered.payload)
    return True


# --------------------------------------------------------------- local state


@dataclass(frozen=True)
class LocalState:
    residual: c.ProtocolTerm
    env: Mapping
    rank: int

    def __post_init__(self):
        size = self.env["size"]
        if not 0 <= self.rank < size:
            raise ValueError(f"rank {self.rank} out of range for size {size}")


def initial_state(p, rank: int, size: int, env=None) -> LocalState:
    body = p.body if isinstance(p, c.Protocol) else p
    return LocalState(c.normalize(body), {**(env or {}), "size": size}, rank)


@dataclass(frozen=True)
class Step:
    action: LocalAction
    cont: LocalState


class AtSkip:
    def __repr__(self):
        return "AT_SKIP"


class NeedsValue:
    """Reserved for lazy foreach expansion; eager projection never returns it."""

    def __repr__(self):
        return "NEEDS_VALUE"


AT_SKIP = AtSkip()
NEEDS_VALUE = NeedsValue()


def eval_rank(t, env, what="rank"):
    v = eval_index(t, env)
    size = env["size"]
    if not c.is_int(v):
        raise EvalError(f"{what} {c.show_term(t)} is not an integer")
    if not 0 <= v < size:
        raise EvalError(f"{what} {c.show_term(t)} = {v} is outside 0..{size - 1}")
    return v


def foreach_range(t: c.Foreach, env):
    lo = eval_index(t.lo, env)
    hi = eval_index(t.hi, env)
    if not (c.is_int(lo) and c.is_int(hi)):
        raise EvalError("foreach bounds must be integers")
    if hi - lo + 1 > MAX_RANGE:
        raise EvalError(f"range {lo} .. {hi} too large for bounded checking")
    return range(lo, hi + 1)


def expand_foreach(t: c.Foreach, env) -> tuple:
    """Every iteration of the body, loop variable substituted, in order."""
    items = []
    for i in foreach_range(t, env):
        items.extend(c.seq_items(c.subst(t.body, t.var, i)))
    return tuple(items)


def project_head(s: LocalState):
    env, rank = s.env, s.rank
    items = c.seq_items(s.residual)
    k = 0
    while k < len(items):
        head = items[k]
        rest = items[k + 1:]

        def cont(extra=()):
            return replace(s, residual=c.make_seq(tuple(extra) + rest))

        match head:
            case c.Message(frm=f, to=t, payload=d):
                src = eval_rank(f, env, "message source")
                dst = eval_rank(t, env, "message destination")
                if src == dst:
                    raise EvalError(f"self-message from {src} to itself")
                if src == rank:
                    return Step(SendA(dst, d), cont())
                if dst == rank:
                    return Step(RecvA(src, d), cont())
                k += 1
            case c.Foreach():
                items = expand_foreach(head, env) + rest
                k = 0
            case c.Choice(cond=cond, then=a, orelse=b):
                taken = eval_prop(cond, env)
                branch = a if taken else b
                return Step(EnterChoiceA("then" if taken else "else"), cont(c.seq_items(branch)))
            case c.Val(var=x, payload=d):
                return Step(ApplyA(x, d), cont())
            case c.Broadcast(root=r, var=x, payload=d):
                return Step(BcastA(eval_rank(r, env, "root"), x, d), cont())
            case c.Scatter(root=r, payload=d):
                return Step(ScatterA(eval_rank(r, env, "root"), d), cont())
            case c.Gather(root=r, payload=d):
                return Step(GatherA(eval_rank(r, env, "root"), d), cont())
            case c.Reduce(root=r, op=op, payload=d):
                return Step(ReduceA(eval_rank(r, env, "root"), op, d), cont())
            case c.Allgather(var=x, payload=d):
                return Step(AllgatherA(x, d), cont())
            case c.Allreduce(op=op, var=x, payload=d):
                return Step(AllreduceA(op, x, d), cont())
            case c.Seq(items=inner):
                items = inner + rest
                k = 0
            case c.Skip():
                k += 1
            case _:
                raise TypeError(f"not a protocol term: {head!r}")
    return AT_SKIP


def is_skip(s: LocalState) -> bool:
    return project_head(s) is AT_SKIP


def chunked(payload) -> bool:
    """Array-typed payloads of scatter/gather/allgather describe the whole
    array; other payloads describe one element per rank."""
    return base_kind(payload) == "array"


def _refinement_error(v, d):
    return RefinementViolation(v, d, f"value {show_value(v)} does not satisfy {c.show_refinement(d)}")


def check_payload(a, v, env, size):
    """Raise RefinementViolation unless ``v`` fits the action's payload.

    ``v`` is the value a rank contributes or observes for ``a``: the message
    value, the broadcast/applied value, the root's whole array for scatter,
    the assembled array for gather/allgather (or a single contribution when
    the payload is per-element), and the contribution for reductions.
    """
    d = a.payload
    local = {**env, a.var: v} if isinstance(a, BINDING_ACTIONS) else env
    if isinstance(a, ScatterA) and not chunked(d):
        if not c.is_array(v) or len(v) != size:
            raise RefinementViolation(v, d, f"scatter of {show_type(d)} needs an array of {size} elements")
        for x in v:
            if not c.check_value(x, d, env):
                raise _refinement_error(x, d)
        return
    if isinstance(a, ScatterA) and c.is_array(v) and len(v) % size:
        raise RefinementViolation(
            v, d, f"scatter of {c.show_refinement(d)}: array length {len(v)} is not divisible by size {size}"
        )
    if not c.check_value(v, d, local):
        raise _refinement_error(v, d)


def advance(s: LocalState, a, v=None, *, result=None) -> LocalState:
    """Consume action ``a``.  ``v`` is checked against the payload; binding
    actions bind ``result`` (default ``v``) to their variable."""
    h = project_head(s)
    if h is AT_SKIP:
        raise ProtocolMismatch("end of protocol", a, f"expected end of protocol, offered {a}")
    if not actions_match(h.action, a):
        raise ProtocolMismatch(h.action, a)
    expected = h.action
    if v is not None and not isinstance(expected, EnterChoiceA):
        check_payload(expected, v, s.env, s.env["size"])
    if isinstance(expected, BINDING_ACTIONS):
        bound = v if result is None else result
        if bound is None:
            raise ValueError(f"{expected} binds '{expected.var}' and needs a value")
        return replace(h.cont, env={**h.cont.env, expected.var: bound})
    return h.cont


# ---------------------------------------------------------- canonical values


@dataclass(frozen=True)
class CanonicalStep:
    action: LocalAction
    offer: object  # what this rank hands to the communication call
    check: object  # what advance checks against the payload
    bound: object  # what the rank's program variable receives


def canonical_step(a, env, size, rank, given=None) -> CanonicalStep:
    """Witness values a canonical program would use for action ``a``."""
    if isinstance(a, EnterChoiceA):
        return CanonicalStep(a, None, None, None)
    if isinstance(a, ApplyA):
        v = given[a.var] if given and a.var in given else witness(a.payload, env)
        return CanonicalStep(a, v, v, v)
    d = a.payload
    if isinstance(a, ScatterA):
        if chunked(d):
            whole = witness(d, env, multiple_of=size)
            k = len(whole) // size
            chunk = whole[rank * k:(rank + 1) * k]
        else:
            whole = (witness(d, env),) * size
            chunk = whole[rank]
        return CanonicalStep(a, whole if rank == a.root else None, whole, chunk)
    if isinstance(a, (GatherA, AllgatherA)):
        if chunked(d):
            whole = witness(d, env, multiple_of=size)
            k = len(whole) // size
            mine = whole[rank * k:(rank + 1) * k]
            check = whole
        else:
            mine = witness(d, env)
            whole = (mine,) * size
            check = mine
        if isinstance(a, GatherA):
            return CanonicalStep(a, mine, check, whole if rank == a.root else ())
        return CanonicalStep(a, mine, check, whole)
    w = witness(d, env)
    if isinstance(a, SendA):
        return CanonicalStep(a, w, w, None)
    if isinstance(a, RecvA):
        return CanonicalStep(a, None, w, w)
    if isinstance(a, BcastA):
        return CanonicalStep(a, w if rank == a.root else None, w, w)
    if isinstance(a, ReduceA):
        return CanonicalStep(a, w, w, fold_values(a.op, [w] * size) if rank == a.root else w)
    if isinstance(a, AllreduceA):
        return CanonicalStep(a, w, w, fold_values(a.op, [w] * size))
    raise TypeError(f"unknown action {a!r}")


def canonical_run(p, size: int, rank: int, env=None):
    """Drive one rank's projection to the end with canonical witness values."""
    given = dict(env or {})
    s = initial_state(p, rank, size, given)
    out = []
    while True:
        h = project_head(s)
        if h is AT_SKIP:
            return out
        step = canonical_step(h.action, s.env, size, rank, given)
        out.append(step)
        check = step.check
        if isinstance(h.action, (GatherA,)) and chunked(h.action.payload) and rank != h.action.root:
            check = None
        s = advance(s, h.action, check, result=step.bound if isinstance(h.action, BINDING_ACTIONS) else None)


def expansion_table(p, size: int, env=None) -> dict:
    """Every rank's complete projected action sequence, ranks in order."""
    return {r: [st.action for st in canonical_run(p, size, r, env)] for r in range(size)}


def format_table(table: dict, fmt="text") -> str:
    if fmt == "json":
        import json

        return json.dumps(
            {"ranks": [{"rank": r, "actions": [action_to_dict(a) for a in acts]} for r, acts in table.items()]},
            indent=2,
        )
    lines = []
    for r, acts in table.items():
        lines.append(f"rank {r}:")
        lines.extend(f"  {a}" for a in acts)
    return "\n".join(lines) + "\n"
