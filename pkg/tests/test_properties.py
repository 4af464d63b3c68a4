from __future__ import annotations

from fractions import Fraction

from conftest import derived, strong_scenario, weak_scenario
from oracles import brute_force_statuses
from xpay.automata import Fresh, State, StateKind, Transition
from xpay.core import Money, customer, escrow
from xpay.properties import (
    Status,
    check_certificate_consistency,
    check_conservation,
    check_consistency,
    check_customer_security,
    check_escrow_security,
    check_liveness,
    check_termination,
    evaluate_all,
)
from xpay.simnet import Scripted, ScriptRule, StrategySpec, Synchronous, run_simulation
from xpay.trace import Rec, Trace

F = Fraction


def _statuses(verdicts):
    return {v.name: v.status.value for v in verdicts}


def test_nominal_run_all_hold():
    trace = run_simulation(strong_scenario(n=2, seed=1))
    got = _statuses(evaluate_all(trace))
    assert got == {"C": "HOLDS", "T": "HOLDS", "ES": "HOLDS", "CS1": "HOLDS",
                   "CS2": "HOLDS", "CS3": "HOLDS", "L": "HOLDS",
                   "CONS": "HOLDS", "AUTH": "HOLDS"}


def test_timeout_run_verdicts():
    """Certificate withheld: refunds all around, liveness vacuous (Bob is Byzantine)."""
    byz = {customer(1): StrategySpec("withhold_certificate")}
    trace = run_simulation(strong_scenario(byzantine=byz, seed=2))
    got = _statuses(evaluate_all(trace))
    assert got["C"] == "HOLDS"
    assert got["ES"] == "HOLDS"
    assert got["CS1"] == "HOLDS"     # alice refunded
    assert got["CS2"] == "VACUOUS"   # bob byzantine
    assert got["L"] == "VACUOUS"
    assert got["CONS"] == "HOLDS"


def test_late_certificate_violates_liveness_with_witness():
    sc = strong_scenario(delay=Scripted(
        default=F(1, 2), delta=F(1),
        rules=(ScriptRule(delay=F(4), src=customer(1), payload="certificate"),),
    ), timing=derived(1))
    trace = run_simulation(sc)
    live = check_liveness(trace)
    assert live.status is Status.VIOLATED
    assert live.witness
    assert all(trace.entries[i].participant == customer(1) for i in live.witness)
    # safety still fine
    assert check_escrow_security(trace).status is Status.HOLDS
    cs = check_customer_security(trace)
    assert cs.cs1.status is Status.HOLDS
    assert check_conservation(trace).status is Status.HOLDS


def test_witness_validity_replaying_witness_participants_retriggers():
    """Re-checking a trace filtered to the witness participants' entries yields
    the same violation."""
    sc = strong_scenario(delay=Scripted(
        default=F(1, 2), delta=F(1),
        rules=(ScriptRule(delay=F(4), src=customer(1), payload="certificate"),),
    ), timing=derived(1))
    trace = run_simulation(sc)
    live = check_liveness(trace)
    assert live.status is Status.VIOLATED
    witness_pids = {trace.entries[i].participant for i in live.witness}
    sub = Trace(meta=trace.meta,
                entries=[e for e in trace.entries if e.participant in witness_pids],
                stop_reason=trace.stop_reason,
                final_balances=trace.final_balances,
                final_in_flight=trace.final_in_flight)
    assert check_liveness(sub).status is Status.VIOLATED


def test_termination_exempts_customers_that_never_engage():
    """Bob starved of the promise neither pays nor certifies: exempt."""
    byz = {customer(0): StrategySpec("silent")}  # alice never pays
    trace = run_simulation(strong_scenario(byzantine=byz, seed=3))
    assert check_termination(trace).status is Status.VACUOUS


def test_termination_exempts_customers_of_byzantine_escrows():
    byz = {escrow(0): StrategySpec("greedy_escrow")}
    trace = run_simulation(strong_scenario(n=2, byzantine=byz, seed=3))
    term = check_termination(trace)
    # alice paid but her escrow is byzantine; c1 paid, e0 is one of hers; bob's
    # escrow e1 is compliant and he is paid, so T evaluates only bob and holds
    assert term.status is Status.HOLDS


def test_deliberate_double_refund_breaks_consistency():
    """A misconfigured escrow prescribed to refund twice hits insufficient funds;
    the oracle is the ledger itself."""
    sc = strong_scenario(seed=4, timing=derived(1))
    base = run_simulation(sc)
    assert check_consistency(base).status is Status.HOLDS

    from xpay.protocol import make_escrow

    def broken_escrow(i, params, pay, clock, key):
        aut = make_escrow(i, params, pay, clock, key)
        states = dict(aut.states)
        # refund twice before going terminal
        states["resolve_refund"] = State("resolve_refund", StateKind.OUTPUT, (
            Transition("refund_again", emits=((customer(i), Fresh(Money(pay.instance, pay.amount))),)),
        ))
        states["refund_again"] = State("refund_again", StateKind.OUTPUT, (
            Transition("refunded", emits=((customer(i), Fresh(Money(pay.instance, pay.amount))),)),
        ))
        aut.states = states
        return aut

    import xpay.simnet as simnet
    sc2 = strong_scenario(
        seed=4, timing=derived(1),
        byzantine={customer(1): StrategySpec("withhold_certificate")})
    sim = simnet._Sim(sc2)
    pid = escrow(0)
    sim.automata[pid] = broken_escrow(0, sim.params, sim.pay, sim.clocks[pid], sim.keys[pid])
    trace = sim.run()
    verdict = check_consistency(trace)
    assert verdict.status is Status.VIOLATED
    assert verdict.witness
    assert any(trace.entries[i].rec is Rec.IMPOSSIBLE_STEP for i in verdict.witness)


def test_certificate_consistency_inapplicable_on_strong_traces():
    trace = run_simulation(strong_scenario(seed=5))
    assert check_certificate_consistency(trace).status is Status.INAPPLICABLE


def test_conservation_on_empty_trace():
    trace = run_simulation(strong_scenario(
        byzantine={escrow(0): StrategySpec("silent"),
                   customer(0): StrategySpec("silent"),
                   customer(1): StrategySpec("silent")}))
    assert check_conservation(trace).status is Status.HOLDS


# ----------------------------------------------------- brute-force coincidence

def _battery_sample():
    """A cross-section of the strategy battery for the coincidence check
    (the acceptance suite runs the full battery)."""
    return [
        {},
        {customer(1): StrategySpec("withhold_certificate")},
        {customer(1): StrategySpec("premature_certificate")},
        {customer(1): StrategySpec("delay_own_sends", {"delay": F(2)})},
        {customer(0): StrategySpec("silent")},
        {customer(0): StrategySpec("replayer")},
        {escrow(0): StrategySpec("greedy_escrow")},
        {escrow(0): StrategySpec("silent"), customer(1): StrategySpec("replayer")},
        {customer(0): StrategySpec("delay_own_sends", {"delay": F(1, 2)}),
         customer(1): StrategySpec("withhold_certificate")},
    ]


def test_checkers_coincide_with_brute_force_on_battery_sample():
    grid = (F(1, 4), F(1, 2), F(1))
    for assignment in _battery_sample():
        for seed in range(6):
            sc = strong_scenario(seed=seed, byzantine=dict(assignment),
                                 delay=Synchronous(F(1), grid=grid))
            trace = run_simulation(sc)
            lib = _statuses(evaluate_all(trace))
            oracle = brute_force_statuses(trace)
            for name, want in oracle.items():
                assert lib[name] == want, (
                    f"{name}: checker={lib[name]} oracle={want} "
                    f"byz={assignment} seed={seed}")


def test_monotone_conditionality_vacuous_clauses_stay_vacuous():
    """Growing the Byzantine set can only keep or vacate conditional clauses."""
    chains = [
        [{},
         {customer(1): StrategySpec("withhold_certificate")},
         {customer(1): StrategySpec("withhold_certificate"),
          escrow(0): StrategySpec("greedy_escrow")}],
        [{},
         {customer(0): StrategySpec("silent")},
         {customer(0): StrategySpec("silent"),
          customer(1): StrategySpec("silent")}],
    ]
    conditional = ("T", "CS1", "CS2", "CS3", "L")
    for chain in chains:
        previous = None
        for assignment in chain:
            trace = run_simulation(strong_scenario(seed=6, byzantine=dict(assignment)))
            got = _statuses(evaluate_all(trace))
            if previous is not None:
                for name in conditional:
                    if previous[name] == "VACUOUS":
                        assert got[name] in ("VACUOUS",), (
                            f"{name} came back from vacuous when the byzantine set grew")
            previous = got


def test_weak_clause_wording():
    trace = run_simulation(weak_scenario(seed=9))
    got = _statuses(evaluate_all(trace))
    assert got["CC"] == "HOLDS"
    assert got["CS1"] == "HOLDS"
    assert got["CS2"] == "HOLDS"
    oracle = brute_force_statuses(trace)
    for name, want in oracle.items():
        assert got[name] == want
