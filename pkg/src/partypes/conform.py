"""Checking an SPMD program against a global protocol, one size at a time.

Every rank runs the program under the synchronous scheduler while holding
its own projection of the protocol.  Each communication a rank offers must be
the next action of its projection, and every value sent, received or applied
must inhabit the protocol's payload type.  When a rank finishes, nothing may
be left in its projection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import core as c
from . import program as pg
from . import project as pj
from .bindings import Bindings, BindingsFile, validate
from .core import eval_prop, same_value, show_type, show_value
from .errors import CheckError, EvalError, PreconditionError, RefinementViolation
from .simulate import BLOCKED, Scheduler, Stop
from .wellformed import ERROR, SizeRange, check_size

__all__ = [
    "Bindings",
    "BindingsFile",
    "ConformanceReport",
    "Failure",
    "check_all_sizes",
    "check_conformance",
]

PROTOCOL_MISMATCH = "ProtocolMismatch"
REFINEMENT_VIOLATION = "RefinementViolation"
VAL_DISAGREEMENT = "ValDisagreement"
RESIDUAL_NOT_SKIP = "ResidualNotSkip"
RUNTIME_ERROR = "RuntimeError"

PASS, FAIL, EXCLUDED = "pass", "fail", "excluded"


@dataclass(frozen=True)
class Failure:
    rank: int
    kind: str
    expected: str
    offered: str
    message: str
    span: object = None

    def to_dict(self):
        return {
            "rank": self.rank,
            "kind": self.kind,
            "expected": self.expected,
            "offered": self.offered,
            "message": self.message,
            "span": self.span.to_dict() if self.span else None,
        }

    def __str__(self):
        where = f" at {self.span}" if self.span else ""
        return f"rank {self.rank}{where}: {self.kind}: {self.message}"


@dataclass
class ConformanceReport:
    size: int
    verdict: str  # pass | fail | excluded
    failure: Optional[Failure] = None
    collective_log: list = field(default_factory=list)
    steps: int = 0

    @property
    def passed(self):
        return self.verdict == PASS

    def to_dict(self):
        return {
            "size": self.size,
            "verdict": self.verdict,
            "failure": self.failure.to_dict() if self.failure else None,
            "collectiveLog": list(self.collective_log),
            "steps": self.steps,
        }


def describe_offer(p: pg.Pending) -> str:
    if p.kind in ("send", "recv"):
        return f"{p.kind} {p.peer}"
    parts = [p.kind]
    if p.root is not None:
        parts.append(str(p.root))
    if p.op is not None:
        parts.append(p.op)
    return " ".join(parts)


def _offer_matches(a, p: pg.Pending) -> bool:
    if pj.action_kind(a) != p.kind:
        return False
    match a:
        case pj.SendA(to=to):
            return to == p.peer
        case pj.RecvA(frm=frm):
            return frm == p.peer
        case pj.ReduceA(root=root, op=op):
            return root == p.root and op == p.op
        case pj.BcastA(root=root) | pj.ScatterA(root=root) | pj.GatherA(root=root):
            return root == p.root
        case pj.AllreduceA(op=op):
            return op == p.op
    return True


def _shown(v):
    if c.is_array(v) and len(v) > 8:
        return f"array of length {len(v)}"
    return show_value(v)


class _Checker(Scheduler):
    sync_apply = True

    def __init__(self, prog, proto, bindings, max_steps=None):
        super().__init__(prog, bindings, max_steps)
        self.states = [pj.initial_state(proto, r, self.size) for r in range(self.size)]
        self.failure = None
        self.log = []

    def fail(self, rank, kind, expected, offered, message, span=None):
        self.failure = Failure(rank, kind, str(expected), str(offered), message, span)
        raise Stop

    def head(self, r, span=None):
        """The next non-choice action of rank ``r``; choices are entered silently."""
        try:
            while True:
                h = pj.project_head(self.states[r])
                if h is pj.AT_SKIP or not isinstance(h.action, pj.EnterChoiceA):
                    return h
                self.states[r] = h.cont
        except EvalError as e:
            self.fail(r, PROTOCOL_MISMATCH, "an evaluable protocol", "-", f"protocol evaluation failed: {e}", span)

    def check(self, r, a, v, span):
        try:
            pj.check_payload(a, v, self.states[r].env, self.size)
        except RefinementViolation as e:
            self.fail(r, REFINEMENT_VIOLATION, show_type(a.payload), _shown(v), str(e), span)
        except CheckError as e:
            self.fail(r, REFINEMENT_VIOLATION, show_type(a.payload), _shown(v), str(e), span)

    # -- scheduler hooks

    def on_offer(self, r, p):
        h = self.head(r, p.span)
        if p.kind == "send" and not (0 <= p.peer < self.size and p.peer != r):
            expected = h.action if h is not pj.AT_SKIP else "end of protocol"
            self.fail(
                r, PROTOCOL_MISMATCH, expected, describe_offer(p),
                f"invalid destination {p.peer} for a send from rank {r} at size {self.size}", p.span,
            )
        if h is pj.AT_SKIP:
            self.fail(
                r, PROTOCOL_MISMATCH, "end of protocol", describe_offer(p),
                f"expected end of protocol, offered {describe_offer(p)}", p.span,
            )
        a = h.action
        if not _offer_matches(a, p):
            self.fail(r, PROTOCOL_MISMATCH, a, describe_offer(p), f"expected {a}, offered {describe_offer(p)}", p.span)
        chunked = pj.chunked(a.payload)
        match a:
            case pj.SendA() | pj.ApplyA() | pj.ReduceA() | pj.AllreduceA():
                self.check(r, a, p.value, p.span)
            case pj.BcastA(root=root) | pj.ScatterA(root=root) if root == r:
                self.check(r, a, p.value, p.span)
            case pj.GatherA() | pj.AllgatherA() if not chunked:
                self.check(r, a, p.value, p.span)

    def on_terminate(self, r):
        h = self.head(r)
        if h is not pj.AT_SKIP:
            self.fail(
                r, RESIDUAL_NOT_SKIP, h.action, "end of program",
                f"program finished but the protocol still expects {h.action}",
            )

    def on_fault(self, r, error):
        self.fail(r, RUNTIME_ERROR, "-", "-", str(error), error.span)

    def on_commit(self, event, results):
        if event.kind == "p2p":
            src, dst = event.ranks
            p = self.ranks[dst].pending
            h = self.head(dst, p.span)
            self.check(dst, h.action, event.value, p.span)
            for r in (src, dst):
                self.states[r] = pj.advance(self.states[r], self.head(r).action)
            return
        pendings = [st.pending for st in self.ranks]
        if event.kind == "apply":
            v0 = pendings[0].value
            for r, p in enumerate(pendings):
                if not same_value(p.value, v0):
                    self.fail(
                        r, VAL_DISAGREEMENT, _shown(v0), _shown(p.value),
                        f"rank {r} applies {_shown(p.value)} but rank 0 applies {_shown(v0)}", p.span,
                    )
        for r, p in enumerate(pendings):
            a = self.head(r, p.span).action
            bound = None
            match a:
                case pj.ApplyA():
                    bound = p.value
                case pj.BcastA() | pj.AllreduceA():
                    bound = results[r]
                case pj.AllgatherA():
                    bound = results[r]
                    if pj.chunked(a.payload):
                        self.check(r, a, bound, p.span)
                case pj.GatherA(root=root) if root == r and pj.chunked(a.payload):
                    self.check(r, a, results[r], p.span)
            self.states[r] = pj.advance(self.states[r], a, result=bound)
        self.log.append(event.describe())


def _precondition(prog, proto, b: Bindings):
    validate(prog, b)
    try:
        admitted = eval_prop(proto.size_prop, {"size": b.size})
    except EvalError as e:
        raise PreconditionError(f"cannot evaluate the size proposition at size {b.size}: {e}") from e
    if not admitted:
        raise PreconditionError(f"size {b.size} is excluded by the protocol's size proposition")
    verdict = check_size(proto, b.size)
    if verdict.status == ERROR:
        errors = "; ".join(str(d) for d in verdict.diagnostics if d.severity == "error")
        raise PreconditionError(f"protocol {proto.name} is not well formed at size {b.size}: {errors}")


def check_conformance(prog: pg.Program, proto: c.Protocol, b: Bindings, max_steps=None) -> ConformanceReport:
    _precondition(prog, proto, b)
    checker = _Checker(prog, proto, b, max_steps)
    checker.execute()
    report = ConformanceReport(b.size, FAIL, collective_log=checker.log, steps=checker.steps)
    if checker.failure is not None:
        report.failure = checker.failure
    elif checker.exhausted:
        report.failure = Failure(-1, RUNTIME_ERROR, "-", "-", f"step budget of {checker.max_steps} exhausted")
    else:
        blocked = [st for st in checker.ranks if st.status == BLOCKED]
        if blocked:
            st = blocked[0]
            try:
                h = checker.head(st.rank)
            except Stop:
                h = None
            expected = h.action if h not in (None, pj.AT_SKIP) else "end of protocol"
            report.failure = Failure(
                st.rank, PROTOCOL_MISMATCH, str(expected), describe_offer(st.pending),
                f"rank {st.rank} is stuck on {describe_offer(st.pending)}", st.pending.span,
            )
        else:
            report.verdict = PASS
    return report


def check_all_sizes(prog, proto, bindings_for, r: SizeRange = SizeRange(), max_steps=None) -> list:
    """One report per size in ``r``; sizes the protocol excludes are marked so.

    ``bindings_for`` is a ``BindingsFile`` or a function from size to Bindings.
    """
    out = []
    for size in r:
        try:
            admitted = eval_prop(proto.size_prop, {"size": size})
        except EvalError as e:
            raise PreconditionError(f"cannot evaluate the size proposition at size {size}: {e}") from e
        if not admitted:
            out.append(ConformanceReport(size, EXCLUDED))
            continue
        if isinstance(bindings_for, BindingsFile):
            b = bindings_for.for_size(size, prog)
        else:
            b = bindings_for(size)
        out.append(check_conformance(prog, proto, b, max_steps))
    return out


def format_report(report: ConformanceReport) -> str:
    if report.verdict == EXCLUDED:
        return f"size {report.size}: excluded by the size proposition\n"
    if report.verdict == PASS:
        return f"size {report.size}: pass ({len(report.collective_log)} collectives, {report.steps} rendezvous)\n"
    f = report.failure
    lines = [f"size {report.size}: fail", f"  {f}"]
    if f.kind in (PROTOCOL_MISMATCH, RESIDUAL_NOT_SKIP, VAL_DISAGREEMENT, REFINEMENT_VIOLATION):
        lines.append(f"  expected: {f.expected}")
        lines.append(f"  offered:  {f.offered}")
    return "\n".join(lines) + "\n"
