from __future__ import annotations

from fractions import Fraction

from conftest import strong_scenario, weak_scenario
from xpay.core import customer
from xpay.explore import battery_assignments, explore
from xpay.simnet import StrategySpec, Synchronous

F = Fraction
GRID3 = (F(1, 4), F(1, 2), F(1))


def test_compliant_exploration_is_safe_and_live():
    base = strong_scenario(delay=Synchronous(F(1), grid=GRID3))
    report = explore(base)
    assert report.complete
    assert report.safe
    assert report.bob_paid_everywhere["compliant"]
    # worst leaf over the grid hits the termination bound exactly
    from xpay.timing import termination_bound
    assert report.max_customer_terminal == termination_bound(base.resolved_timing())


def test_boundary_tie_is_explored_in_both_orders():
    """The all-max-delay leaf puts the certificate at the window boundary: the
    receive-first runs pay out, the timeout-first ones refund, and safety holds
    in both."""
    base = strong_scenario(delay=Synchronous(F(1), grid=GRID3))
    seen_policies = set()
    outcomes = {}

    def watch(outcome):
        seen_policies.add(outcome.policy)
        if outcome.trace is not None:
            hit = outcome.trace.terminal_entry(customer(1))
            if hit:
                outcomes.setdefault(outcome.policy[0], set()).add(hit[1].state)

    report = explore(base, on_branch=watch)
    assert report.safe
    assert len(seen_policies) == 4  # ties occurred, alternates were run
    assert "paid" in outcomes["receive_first"]
    # timeout-first runs happen exactly on tie leaves, where they refund: Bob
    # never reaches a terminal there, so no "paid" outcome can appear
    assert "paid" not in outcomes.get("timeout_first", set())
    assert report.bob_paid_everywhere["compliant"]


def test_budget_exhaustion_reports_incomplete():
    base = strong_scenario(delay=Synchronous(F(1), grid=GRID3))
    report = explore(base, budget=10)
    assert not report.complete
    assert report.branches == 10


def test_battery_covers_roles_and_subsets():
    base = strong_scenario(delay=Synchronous(F(1), grid=GRID3))
    assignments = battery_assignments(base)
    assert {} in assignments
    # escrow-only strategies never land on customers and vice versa
    for assignment in assignments:
        for pid, spec in assignment.items():
            if spec.name == "greedy_escrow":
                assert pid.kind.value == "e"
            if spec.name in ("withhold_certificate", "premature_certificate"):
                assert pid == customer(1)
    # 1 escrow with 4 options, alice with 3, bob with 5 -> 5*4*6 combinations
    assert len(assignments) == 5 * 4 * 6


def test_weak_battery_includes_impatient_abort():
    base = weak_scenario(delay=Synchronous(F(1), grid=(F(1, 2), F(1))))
    assignments = battery_assignments(base)
    names = {spec.name for assignment in assignments for spec in assignment.values()}
    assert "impatient_abort" in names


def test_byzantine_deliveries_are_pinned_not_branched():
    """With a silent Bob only the messages to compliant recipients branch."""
    base = strong_scenario(delay=Synchronous(F(1), grid=GRID3))
    assignment = {customer(1): StrategySpec("silent")}
    report = explore(base, assignments=[assignment])
    # flow: G -> c0 (branch), $ -> e0 (branch), P -> bob (pinned),
    # refund -> c0 (branch): 27 leaves plus tie re-runs, well under 81
    assert report.complete
    assert report.branches < 81
    assert report.safe


def test_weak_interleavings_certificate_consistency():
    base = weak_scenario(delay=Synchronous(F(1), grid=(F(1, 2), F(1))),
                         patience=(F(2), F(2)))
    report = explore(base)
    assert report.complete
    assert report.safe
    cc = report.counts.get("CC")
    assert cc and cc["fail"] == 0 and cc["pass"] == report.branches
