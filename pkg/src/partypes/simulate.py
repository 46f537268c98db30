"""Synchronous (unbuffered) execution of SPMD programs with deadlock detection.

A send completes only together with the matching receive.  Collectives
complete when every rank is pending on the same collective with the same
root and op.  Among enabled rendezvous the scheduler always commits the one
whose smallest participating rank is smallest, so runs are reproducible.
"""
from __future__ import annotations

import os
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import core as c
from . import program as pg
from .bindings import Bindings
from .core import fold_values, format_value
from .errors import EvalError

DEFAULT_MAX_STEPS = 10**7

RUNNING = "running"
BLOCKED = "blocked"
TERMINATED = "terminated"
FAULTED = "faulted"


def max_steps_from_env() -> int:
    raw = os.environ.get("PARTYPES_MAX_STEPS")
    return int(raw) if raw else DEFAULT_MAX_STEPS


@dataclass
class RankState:
    rank: int
    status: str = RUNNING
    pending: Optional[pg.Pending] = None
    error: Optional[pg.ProgramError] = None
    env: object = None
    gen: object = field(default=None, repr=False)

    @property
    def done(self):
        return self.status in (TERMINATED, FAULTED)


@dataclass(frozen=True)
class Rendezvous:
    """One committed communication step."""

    step: int
    kind: str
    ranks: tuple
    root: Optional[int] = None
    op: Optional[str] = None
    value: object = None  # the transferred value of a point-to-point message

    def describe(self) -> str:
        if self.kind == "p2p":
            src, dst = self.ranks
            return f"step {self.step}: {src} -> {dst} : {format_value(self.value)}"
        s = f"step {self.step}: collective {self.op_kind}"
        if self.root is not None:
            s += f" root {self.root}"
        if self.op is not None:
            s += f" {self.op}"
        return s

    @property
    def op_kind(self):
        return self.kind


class Stop(Exception):
    """Raised by a hook to end a run early."""


class Scheduler:
    """Runs every rank of a program in lockstep.  Subclasses observe offers,
    terminations and commits through the ``on_*`` methods."""

    sync_apply = False

    def __init__(self, prog: pg.Program, bindings: Bindings, max_steps=None):
        self.prog = prog
        self.size = bindings.size
        self.bindings = bindings
        self.max_steps = max_steps if max_steps is not None else max_steps_from_env()
        self.ranks = [RankState(r) for r in range(self.size)]
        self.steps = 0
        self.exhausted = False
        self.stopped = False

    # -- hooks

    def on_offer(self, rank: int, pending: pg.Pending):
        pass

    def on_terminate(self, rank: int):
        pass

    def on_fault(self, rank: int, error: pg.ProgramError):
        pass

    def on_commit(self, event: Rendezvous, results: dict):
        pass

    # -- machinery

    def _resume(self, r, value=None):
        st = self.ranks[r]
        while True:
            try:
                if st.gen is None:
                    st.gen = pg.run_rank(self.prog, r, self.size, self.bindings.values)
                    pending = next(st.gen)
                else:
                    pending = st.gen.send(value)
            except StopIteration as stop:
                st.status, st.pending, st.env = TERMINATED, None, stop.value
                self.on_terminate(r)
                return
            except pg.ProgramError as e:
                st.status, st.pending, st.error = FAULTED, None, e
                self.on_fault(r, e)
                return
            if pending.kind == "apply" and not self.sync_apply:
                value = None
                continue
            st.status, st.pending = BLOCKED, pending
            self.on_offer(r, pending)
            return

    def enabled(self, first_only=False) -> list:
        """Enabled rendezvous ordered by their smallest participating rank."""
        ranks = self.ranks
        out = []
        collective = False
        for st in ranks:
            if st.status != BLOCKED:
                continue
            p = st.pending
            found = None
            if p.kind == "send":
                t = p.peer
                if t > st.rank and t < self.size:
                    q = ranks[t].pending
                    if ranks[t].status == BLOCKED and q.kind == "recv" and q.peer == st.rank:
                        found = ("p2p", st.rank, t)
            elif p.kind == "recv":
                f = p.peer
                # a pair is listed once, under its smaller rank
                if 0 <= f < self.size and f > st.rank:
                    q = ranks[f].pending
                    if ranks[f].status == BLOCKED and q.kind == "send" and q.peer == st.rank:
                        found = ("p2p", f, st.rank)
            elif not collective and self._collective_ready(p):
                collective = True
                found = ("collective",)
            if found is not None:
                if first_only:
                    return [found]
                out.append(found)
        return out

    def choose(self, options):
        return options[0]

    def _collective_ready(self, p):
        return all(
            st.status == BLOCKED and st.pending.kind == p.kind and st.pending.root == p.root and st.pending.op == p.op
            for st in self.ranks
        )

    def _commit(self, choice):
        self.steps += 1
        if choice[0] == "p2p":
            _, src, dst = choice
            value = self.ranks[src].pending.value
            event = Rendezvous(self.steps, "p2p", (src, dst), value=value)
            self.on_commit(event, {src: None, dst: value})
            for r, v in sorted(((src, None), (dst, value))):
                self._resume(r, v)
            return
        head = self.ranks[0].pending
        try:
            results = collective_results(head.kind, head.root, head.op, [st.pending.value for st in self.ranks])
        except (EvalError, pg.ProgramError) as e:
            culprit = head.root if head.root is not None else 0
            st = self.ranks[culprit]
            err = pg.ProgramError(str(e), st.pending.span)
            st.status, st.pending, st.error = FAULTED, None, err
            self.on_fault(culprit, err)
            return
        event = Rendezvous(self.steps, head.kind, tuple(range(self.size)), root=head.root, op=head.op)
        self.on_commit(event, dict(enumerate(results)))
        for r in range(self.size):
            self._resume(r, results[r])

    def execute(self):
        try:
            for r in range(self.size):
                self._resume(r)
            while True:
                options = self.enabled(first_only=type(self).choose is Scheduler.choose)
                if not options:
                    return
                choice = self.choose(options)
                if self.steps >= self.max_steps:
                    self.exhausted = True
                    return
                self._commit(choice)
        except Stop:
            self.stopped = True


def _chunks(v, size):
    if not c.is_array(v):
        raise pg.ProgramError(f"scatter needs an array at the root, got {format_value(v)}")
    if len(v) % size:
        raise pg.ProgramError(f"scatter of {len(v)} elements is not divisible among {size} ranks")
    k = len(v) // size
    return [v[i * k:(i + 1) * k] for i in range(size)]


def _concat(values):
    if all(c.is_array(v) for v in values):
        return tuple(x for v in values for x in v)
    if any(c.is_array(v) for v in values):
        raise pg.ProgramError("gather mixes arrays and scalars")
    return tuple(values)


def collective_results(kind, root, op, values):
    """Per-rank results of a collective, given each rank's contribution."""
    size = len(values)
    if kind == "broadcast":
        return [values[root]] * size
    if kind == "scatter":
        return _chunks(values[root], size)
    if kind == "gather":
        whole = _concat(values)
        return [whole if r == root else () for r in range(size)]
    if kind == "reduce":
        folded = fold_values(op, values)
        return [folded if r == root else values[r] for r in range(size)]
    if kind == "allgather":
        return [_concat(values)] * size
    if kind == "allreduce":
        return [fold_values(op, values)] * size
    if kind == "apply":
        return [None] * size
    raise ValueError(f"unknown collective {kind}")


# ----------------------------------------------------------- deadlock report


@dataclass
class DeadlockReport:
    deadlocked: bool
    wait_for_cycle: list  # [(rank, Pending)]
    steps_executed: int
    verdict: str  # "ok" | "deadlock" | "budget-exhausted"
    kind: Optional[str] = None  # "cycle" | "unmatched-collective" | "orphaned"
    blocked: list = field(default_factory=list)
    faults: list = field(default_factory=list)  # [(rank, ProgramError)]
    final_states: list = field(default_factory=list, repr=False)
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "deadlocked": self.deadlocked,
            "verdict": self.verdict,
            "kind": self.kind,
            "stepsExecuted": self.steps_executed,
            "waitForCycle": [{"rank": r, "pending": p.describe()} for r, p in self.wait_for_cycle],
            "blocked": [{"rank": r, "pending": p.describe()} for r, p in self.blocked],
            "faults": [
                {"rank": r, "message": str(e), "span": e.span.to_dict() if e.span else None} for r, e in self.faults
            ],
        }


def waits_for(states, r) -> list:
    """Ranks that blocked rank ``r`` is waiting on, in ascending order."""
    p = states[r].pending
    if p.kind in ("send", "recv"):
        return [p.peer] if 0 <= p.peer < len(states) else []
    return [
        st.rank
        for st in states
        if st.rank != r
        and not (st.status == BLOCKED and st.pending.kind == p.kind and st.pending.root == p.root and st.pending.op == p.op)
    ]


def find_cycle(states) -> list:
    """A wait-for cycle among blocked ranks, rotated to start at its smallest rank."""
    blocked = {st.rank for st in states if st.status == BLOCKED}
    color = {}

    def dfs(r, path):
        color[r] = "grey"
        path.append(r)
        for q in waits_for(states, r):
            if q not in blocked:
                continue
            if color.get(q) == "grey":
                return path[path.index(q):]
            if q not in color:
                found = dfs(q, path)
                if found:
                    return found
        path.pop()
        color[r] = "black"
        return None

    for r in sorted(blocked):
        if r not in color:
            cycle = dfs(r, [])
            if cycle:
                k = cycle.index(min(cycle))
                return cycle[k:] + cycle[:k]
    return []


class _Simulation(Scheduler):
    def __init__(self, prog, bindings, observer=None, max_steps=None):
        super().__init__(prog, bindings, max_steps)
        self.observer = observer
        self.faults = []
        self.trace = []

    def on_fault(self, rank, error):
        self.faults.append((rank, error))

    def on_commit(self, event, results):
        self.trace.append(event.describe())
        if self.observer is not None:
            self.observer(event)


class _ShuffledSimulation(_Simulation):
    """Commits a random enabled rendezvous; used to test schedule independence."""

    def __init__(self, prog, bindings, observer, max_steps, seed):
        super().__init__(prog, bindings, observer, max_steps)
        self.rng = random.Random(seed)

    def choose(self, options):
        return self.rng.choice(options)


def run(
    prog: pg.Program, bindings: Bindings, hooks: Optional[Callable] = None, max_steps=None, seed=None
) -> DeadlockReport:
    """Execute ``prog`` under synchronous semantics; ``hooks`` sees every commit.

    With ``seed`` the scheduler picks among enabled rendezvous at random
    instead of by smallest rank.
    """
    if seed is None:
        sim = _Simulation(prog, bindings, hooks, max_steps)
    else:
        sim = _ShuffledSimulation(prog, bindings, hooks, max_steps, seed)
    sim.execute()
    states = sim.ranks
    blocked = [(st.rank, st.pending) for st in states if st.status == BLOCKED]
    common = dict(
        steps_executed=sim.steps, faults=sim.faults, final_states=states, trace=sim.trace, blocked=blocked
    )
    if sim.exhausted:
        return DeadlockReport(False, [], verdict="budget-exhausted", **common)
    if not blocked:
        return DeadlockReport(False, [], verdict="ok", **common)
    cycle = find_cycle(states)
    if cycle:
        kind = "cycle"
    elif any(p.kind not in ("send", "recv") for _, p in blocked):
        kind = "unmatched-collective"
    else:
        kind = "orphaned"
    return DeadlockReport(
        True, [(r, states[r].pending) for r in cycle], verdict="deadlock", kind=kind, **common
    )


def format_report(report: DeadlockReport) -> str:
    lines = []
    if report.verdict == "ok":
        lines.append(f"no deadlock ({report.steps_executed} rendezvous)")
    elif report.verdict == "budget-exhausted":
        lines.append(f"step budget exhausted after {report.steps_executed} rendezvous")
    else:
        lines.append(f"deadlock ({report.kind}) after {report.steps_executed} rendezvous")
        if report.wait_for_cycle:
            lines.append("wait-for cycle:")
            lines.extend(f"  rank {r}: {p.describe()}" for r, p in report.wait_for_cycle)
        lines.append("blocked ranks:")
        lines.extend(f"  rank {r}: {p.describe()}" for r, p in report.blocked)
    for r, e in report.faults:
        where = f" at {e.span}" if e.span else ""
        lines.append(f"rank {r} faulted{where}: {e}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------- synthesis


def _lit(v):
    if c.is_array(v):
        return pg.ArrayLit(tuple(_lit(x) for x in v))
    return pg.Num(v)


def _stmts_for(steps, rank):
    from . import project as pj

    out = []
    tmp = pg.Target("v", True)
    for st in steps:
        a = st.action
        match a:
            case pj.EnterChoiceA():
                continue
            case pj.ApplyA():
                out.append(pg.Apply(_lit(st.offer)))
            case pj.SendA(to=to):
                out.append(pg.Send(pg.Num(to), _lit(st.offer)))
            case pj.RecvA(frm=frm):
                out.append(pg.Recv(tmp, pg.Num(frm)))
            case pj.BcastA(root=root):
                out.append(pg.Broadcast(tmp, pg.Num(root), _lit(st.offer) if rank == root else pg.Num(0)))
            case pj.ScatterA(root=root):
                out.append(pg.Scatter(tmp, pg.Num(root), _lit(st.offer) if rank == root else pg.Num(0)))
            case pj.GatherA(root=root):
                out.append(pg.Gather(tmp, pg.Num(root), _lit(st.offer)))
            case pj.ReduceA(root=root, op=op):
                out.append(pg.Reduce(tmp, pg.Num(root), op, _lit(st.offer)))
            case pj.AllgatherA():
                out.append(pg.Allgather(tmp, _lit(st.offer)))
            case pj.AllreduceA(op=op):
                out.append(pg.Allreduce(tmp, op, _lit(st.offer)))
    return tuple(out)


def synthesize(proto, size: int, env=None) -> pg.Program:
    """An SPMD program whose rank ``r`` performs exactly rank ``r``'s row of
    the expansion table, supplying canonical witness values."""
    from .project import canonical_run

    per_rank = [_stmts_for(canonical_run(proto, size, r, env), r) for r in range(size)]
    if not any(per_rank):
        return pg.Program((), ())
    body: tuple = ()
    for r in reversed(range(size)):
        if r == size - 1:
            body = per_rank[r]
            continue
        cond = pg.Binary("=", pg.Var("rank"), pg.Num(r))
        body = (pg.If(cond, per_rank[r], body),)
    return pg.Program((), body)
