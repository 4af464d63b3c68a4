"""Exhaustive branch exploration: the brute-force oracle behind the safety claims.

Enumerates every assignment of grid delays to messages bound for compliant
recipients (deliveries to Byzantine participants are pinned at the grid
maximum: the adversary's reaction timing is its own to choose, and pinning it
keeps the tree finite), crossed with the scheduler's tie-break policies and
with a configurable family of Byzantine assignments. Every branch is fully
simulated and checked.

Policies beyond the default are re-run only for leaves whose baseline run hit
a simultaneity (two enabled receives, or a receive against a due timeout):
branches without ties execute identically under every policy, so skipping
them loses nothing.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .core import ConfigError, Envelope, ParticipantId, ParticipantKind, customer
from .properties import Status, Verdict, check_liveness, safety_verdicts
from .simnet import STRATEGIES, Scenario, StrategySpec, run_simulation
from .trace import Trace


class _DecidedDelays:
    """Delay model fed by an explicit decision vector over the grid.

    Each send to a compliant recipient consumes one decision; past the end of
    the vector the first grid point is chosen and the vector grows, which is
    how the driver discovers the branching degree of a prefix.
    """

    def __init__(self, grid: tuple[Fraction, ...], byzantine: set[ParticipantId],
                 decisions: list[int], delta: Optional[Fraction]):
        self.grid = grid
        self.byzantine = byzantine
        self.decisions = decisions
        self.cursor = 0
        self._delta = delta

    def delta_bound(self) -> Optional[Fraction]:
        return self._delta

    def delay_for(self, env: Envelope, t, rng, index) -> Fraction:
        if env.dst in self.byzantine:
            return self.grid[-1]
        if self.cursor < len(self.decisions):
            choice = self.decisions[self.cursor]
        else:
            choice = 0
            self.decisions.append(0)
        self.cursor += 1
        return self.grid[choice]

    def to_config(self) -> dict:
        return {"kind": "explored", "grid": [str(g) for g in self.grid],
                "decisions": list(self.decisions)}


POLICIES = (
    ("receive_first", "declared"),
    ("receive_first", "reversed"),
    ("timeout_first", "declared"),
    ("timeout_first", "reversed"),
)


@dataclass
class BranchOutcome:
    assignment_label: str
    policy: tuple[str, str]
    decisions: tuple[int, ...]
    verdicts: list[Verdict]
    trace: Trace


@dataclass
class ExploreReport:
    branches: int = 0
    complete: bool = True
    violations: list[BranchOutcome] = field(default_factory=list)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    bob_paid_everywhere: dict[str, bool] = field(default_factory=dict)
    max_customer_terminal: Optional[Fraction] = None

    @property
    def safe(self) -> bool:
        return not self.violations

    def _record(self, outcome: BranchOutcome, bob_paid: bool, keep_trace: bool) -> None:
        self.branches += 1
        violated = False
        for v in outcome.verdicts:
            per = self.counts.setdefault(v.name, {"pass": 0, "vacuous": 0, "fail": 0})
            if v.status is Status.VIOLATED:
                per["fail"] += 1
                violated = True
            elif v.status in (Status.VACUOUS, Status.INAPPLICABLE):
                per["vacuous"] += 1
            else:
                per["pass"] += 1
        if violated:
            self.violations.append(outcome)
        elif not keep_trace:
            outcome.trace = None  # free the bulk of the memory on clean branches
        label = outcome.assignment_label
        self.bob_paid_everywhere[label] = (
            self.bob_paid_everywhere.get(label, True) and bob_paid)


def assignment_label(assignment: dict[ParticipantId, StrategySpec]) -> str:
    if not assignment:
        return "compliant"
    parts = [f"{p}={assignment[p].label()}"
             for p in sorted(assignment, key=lambda q: q.sort_key)]
    return ",".join(parts)


def explore(
    base: Scenario,
    assignments: Sequence[dict[ParticipantId, StrategySpec]] = ({},),
    grid: Optional[Sequence[Fraction]] = None,
    budget: int = 200_000,
    check: Optional[Callable[[Trace], list[Verdict]]] = None,
    on_branch: Optional[Callable[[BranchOutcome], None]] = None,
) -> ExploreReport:
    """Simulate and check every (assignment, delay vector, needed policy) branch.

    `check` defaults to the safety verdict set; the per-assignment liveness
    outcome lands in report.bob_paid_everywhere rather than in the violations.
    The report comes back complete=False once `budget` branches were run.
    `on_branch` sees every outcome (traces of clean branches are dropped after
    the callback to keep memory flat).
    """
    if grid is None:
        grid = getattr(base.delay, "grid", None)
        if grid is None and base.delay.delta_bound() is not None:
            grid = (base.delay.delta_bound(),)
    if not grid:
        raise ConfigError("exploration needs a delay grid")
    grid = tuple(Fraction(g) for g in grid)
    params = base.resolved_timing()
    check = check or safety_verdicts
    report = ExploreReport()
    bob = customer(base.n)

    for assignment in assignments:
        label = assignment_label(assignment)
        byz_pids = set(assignment)
        report.bob_paid_everywhere.setdefault(label, True)
        decisions: list[int] = []
        while True:
            had_tie = False
            for k, policy in enumerate(POLICIES):
                if k > 0 and not had_tie:
                    break
                if report.branches >= budget:
                    report.complete = False
                    return report
                model = _DecidedDelays(grid, byz_pids, decisions, base.delay.delta_bound())
                scenario = replace(base, delay=model, timing=params,
                                   byzantine=dict(assignment),
                                   tie_break=policy[0], rx_order=policy[1])
                trace = run_simulation(scenario)
                if k == 0:
                    had_tie = trace.had_tie
                verdicts = check(trace)
                live = check_liveness(trace)
                # progress is only promised under the protocol's own tie-break;
                # timeout-first runs exist to show safety is order-independent
                bob_paid = policy[0] != "receive_first" or (
                    live.status is Status.HOLDS or (
                        live.status is not Status.VIOLATED and _net_paid(trace, bob)))
                hit = trace.terminal_entry(bob)
                for c in range(base.n + 1):
                    h = trace.terminal_entry(customer(c))
                    if h is not None and (report.max_customer_terminal is None
                                          or h[1].t > report.max_customer_terminal):
                        report.max_customer_terminal = h[1].t
                outcome = BranchOutcome(label, policy, tuple(decisions), verdicts, trace)
                if on_branch is not None:
                    on_branch(outcome)
                report._record(outcome, bob_paid, keep_trace=False)
            # odometer step over however many decisions this leaf consumed
            while decisions and decisions[-1] == len(grid) - 1:
                decisions.pop()
            if not decisions:
                break
            decisions[-1] += 1
    return report


def _net_paid(trace: Trace, bob: ParticipantId) -> bool:
    hit = trace.terminal_entry(bob)
    return hit is not None and trace.net_change(bob, upto=hit[0]) >= trace.meta.amount


def battery_assignments(scenario: Scenario) -> list[dict[ParticipantId, StrategySpec]]:
    """Every Byzantine subset crossed with every applicable strategy per member.

    The compliant (empty) assignment comes first. delay_own_sends posts its
    traffic 2*delta late, past any synchrony bound.
    """
    delta = scenario.delay.delta_bound() or Fraction(1)
    specs_for: dict[ParticipantId, list[StrategySpec]] = {}
    for pid in scenario.participant_ids():
        if pid.kind is ParticipantKind.MANAGER:
            continue
        options = []
        for name in sorted(STRATEGIES):
            _, role_ok = STRATEGIES[name]
            if not role_ok(pid, scenario):
                continue
            params = {"delay": 2 * delta} if name == "delay_own_sends" else {}
            options.append(StrategySpec(name, params))
        specs_for[pid] = options
    pids = sorted(specs_for, key=lambda p: p.sort_key)
    out: list[dict[ParticipantId, StrategySpec]] = [{}]
    for r in range(1, len(pids) + 1):
        for subset in itertools.combinations(pids, r):
            for combo in itertools.product(*(specs_for[p] for p in subset)):
                out.append(dict(zip(subset, combo)))
    return out
