"""Timeout derivation and empirical validation.

The per-hop windows are budgeted bottom-up in real time. Let delta be the
delivery bound and pi the output-state processing budget. After escrow i
issues its downstream promise (recording local time u), the certificate takes
at worst:

    hop n-1:  promise out (delta) + issuer processing (pi) + certificate back
              (delta)                                          H_{n-1} = 2*delta + pi
    hop i:    promise out (delta) + customer deposit (pi) + money down (delta)
              + next escrow's promise issue (pi) + H_{i+1} + next escrow's
              resolution (pi) + certificate up to the customer (delta)
              + customer relay (pi) + certificate up to escrow i (delta)
                                                    H_i = H_{i+1} + 4*delta + 4*pi

A local window must cover the real budget even on the fastest admissible
clock, hence a_i = (1+rho) * H_i + mu. The resolution deadline promised to the
depositor adds the promise-issue and resolution processing on a fast clock:
d_i = a_i + 2*(1+rho)*pi + mu.

The end-to-end termination bound follows the longest customer path: guarantee
out and deposit in (2*delta + 2*pi), promise issue (pi), the full window on
the slowest clock ((1+rho) * a_0), one resolution step (pi), final delivery
(delta), plus the margin:

    D = 2*delta + 3*pi + (1+rho) * a_0 + pi + delta + mu

Windows are exactly tight at mu = 0: the worst-case sweep passes at the
derived values (the boundary arrival is saved by the receive-wins tie-break)
and fails once any a_i is lowered by a grid step. `validate_timeouts` is the
empirical oracle for both claims.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .core import ConfigError, customer
from .protocol import BOB_PAID, TimingParams
from .simnet import Scenario, Scripted, run_simulation
from .trace import Trace


class ValidationFailed(Exception):
    """The derived (or supplied) timeouts break liveness in a worst-case run."""

    def __init__(self, message: str, trace: Optional[Trace] = None):
        super().__init__(message)
        self.trace = trace


def derive_timeouts(
    n: int,
    delta: Fraction,
    pi: Fraction,
    rho: Fraction,
    epsilon: Optional[Fraction] = None,
    margin: Fraction = Fraction(0),
) -> TimingParams:
    """Compute windows that survive worst-case delays, processing, and drift.

    epsilon defaults to 2*(1+rho)*pi + margin, twice the slack the resolution
    step actually needs.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    delta = Fraction(delta)
    pi = Fraction(pi)
    rho = Fraction(rho)
    margin = Fraction(margin)
    if delta <= 0:
        raise ConfigError("delta must be strictly positive")
    if pi < 0 or rho < 0 or margin < 0:
        raise ConfigError("pi, rho, margin must be non-negative")

    budgets = [Fraction(0)] * n
    budgets[n - 1] = 2 * delta + pi
    for i in range(n - 2, -1, -1):
        budgets[i] = budgets[i + 1] + 4 * delta + 4 * pi

    drift = 1 + rho
    a = tuple(drift * h + margin for h in budgets)
    d = tuple(ai + 2 * drift * pi + margin for ai in a)
    if epsilon is None:
        epsilon = 2 * drift * pi + margin
    return TimingParams(n=n, a=a, d=d, epsilon=Fraction(epsilon), pi=pi,
                        delta=delta, rho=rho, mu=margin)


def termination_bound(p: TimingParams) -> Fraction:
    """Real-time bound by which every compliant customer with compliant escrows
    resolves, over every admissible schedule (the worst-case sweep checks the
    maximum actually attained equals this at mu = 0)."""
    return 2 * p.delta + 3 * p.pi + (1 + p.rho) * p.a[0] + p.pi + p.delta + p.mu


_WORST_CLOCK_MODES = ("identity", "worst_case", "escrows_slow", "all_fast", "all_slow")


@dataclass
class SweepResult:
    clock_mode: str
    bob_paid: bool
    trace: Trace
    broken: str = ""  # which progress property the run violates, if any


@dataclass
class TimeoutValidation:
    params: TimingParams
    n: int
    passed: bool
    sweeps: list[SweepResult] = field(default_factory=list)
    max_customer_terminal: Optional[Fraction] = None
    within_bound: bool = True
    promises_ok: bool = True
    tight: list[bool] = field(default_factory=list)
    tightness_step: Fraction = Fraction(0)
    counterexamples: list[SweepResult] = field(default_factory=list)


def _worst_case_scenario(params: TimingParams, n: int, clock_mode: str) -> Scenario:
    return Scenario(
        variant="strong",
        n=n,
        delay=Scripted(default=params.delta, delta=params.delta),
        pi=params.pi,
        rho=params.rho,
        timing=params,
        clock_mode=clock_mode,
        seed=0,
    )


def _bob_paid(trace: Trace, n: int) -> bool:
    bob = customer(n)
    hit = trace.terminal_entry(bob)
    return hit is not None and hit[1].state == BOB_PAID


def _clock_modes(rho: Fraction) -> tuple[str, ...]:
    if rho == 0:
        return ("identity",)
    return _WORST_CLOCK_MODES


def validate_timeouts(
    p: TimingParams,
    n: int,
    step: Optional[Fraction] = None,
) -> TimeoutValidation:
    """Run the worst-case scripted family (every delay at the bound, extreme clock
    assignments, full processing) and report:

    * liveness, termination-within-bound, and promise-honoring at `p`
      (raises ValidationFailed with the first counterexample trace otherwise);
    * tightness evidence: lowering each a_i by one grid `step` (default
      delta/4) produces a progress counterexample. For the bottom hop that is
      a liveness failure (Bob refunded-around, never paid); for the hops above
      it Bob is still paid by the escrows below, and the failure is the
      connector above the shortened window forwarding the certificate too late
      and waiting forever for her payment: a termination failure.
    """
    from .properties import check_promises, check_termination, Status

    if n != p.n:
        raise ConfigError("hop count does not match the timing parameters")
    step = Fraction(step) if step is not None else p.delta / 4
    report = TimeoutValidation(params=p, n=n, passed=False, tightness_step=step)

    bound = termination_bound(p)
    worst_terminal: Optional[Fraction] = None
    for mode in _clock_modes(p.rho):
        trace = run_simulation(_worst_case_scenario(p, n, mode))
        paid = _bob_paid(trace, n)
        result = SweepResult(mode, paid, trace)
        report.sweeps.append(result)
        if not paid:
            raise ValidationFailed(
                f"liveness fails at the derived values under clock mode {mode!r}", trace)
        term = check_termination(trace, bound=bound)
        if term.status is Status.VIOLATED:
            report.within_bound = False
            raise ValidationFailed(
                f"termination bound exceeded under clock mode {mode!r}", trace)
        for verdict in check_promises(trace):
            if verdict.status is Status.VIOLATED:
                report.promises_ok = False
                raise ValidationFailed(
                    f"{verdict.name} dishonored under clock mode {mode!r}", trace)
        for c in customer_terminal_times(trace, n):
            if worst_terminal is None or c > worst_terminal:
                worst_terminal = c
    report.max_customer_terminal = worst_terminal

    for i in range(n):
        a = list(p.a)
        a[i] = a[i] - step
        if a[i] <= 0:
            raise ConfigError(f"tightness step {step} is not smaller than a_{i}")
        reduced = replace(p, a=tuple(a))
        broke = False
        for mode in _clock_modes(p.rho):
            trace = run_simulation(_worst_case_scenario(reduced, n, mode))
            paid = _bob_paid(trace, n)
            term = check_termination(trace, bound=termination_bound(reduced))
            if not paid or term.status is Status.VIOLATED:
                which = "L" if not paid else "T"
                report.counterexamples.append(SweepResult(mode, paid, trace, broken=which))
                broke = True
                break
        report.tight.append(broke)

    # every sweep at p succeeded (failures raise above); tightness is evidence,
    # not a requirement: a positive margin is supposed to leave headroom
    report.passed = True
    return report


def customer_terminal_times(trace: Trace, n: int) -> list[Fraction]:
    out = []
    for k in range(n + 1):
        hit = trace.terminal_entry(customer(k))
        if hit is not None:
            out.append(hit[1].t)
    return out
