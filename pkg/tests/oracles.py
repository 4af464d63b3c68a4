"""Independent brute-force evaluators used as oracles by the test suite.

Everything here deliberately recomputes results from raw trace entries (or raw
matrices) with straight-line code, sharing no helper with the library's
checkers. When a test compares library verdicts against these, the two sides
are genuinely independent routes to the same answer.
"""
from __future__ import annotations

from xpay.core import (
    AbortCert,
    Certificate,
    CommitCert,
    CommitReq,
    Money,
    customer,
    escrow,
    manager,
    verify,
)
from xpay.trace import Rec


def final_summary(trace):
    """Final balances, terminal states, delivered/issued certificates, per participant."""
    balances = dict(trace.meta.initial_balances)
    terminal = {}
    got_chi = set()
    got_commit = set()
    got_abort = set()
    issued_chi = set()
    made_payment = set()
    below_initial = set()
    bob = customer(trace.meta.n)
    tm = manager()
    for e in trace.entries:
        if e.rec is Rec.TRANSFERRED:
            if e.phase == "sent":
                balances[e.frm] -= e.amount
            else:
                balances[e.to] += e.amount
            for p, b in balances.items():
                if b < trace.meta.initial_balances.get(p, 0):
                    below_initial.add(p)
        elif e.rec is Rec.TERMINAL_REACHED:
            terminal.setdefault(e.participant, (e.t, e.state))
        elif e.rec is Rec.DELIVERED:
            payload = e.env.msg.payload
            if isinstance(payload, Certificate) and verify(e.env.msg, bob):
                got_chi.add(e.participant)
            elif isinstance(payload, CommitCert) and verify(e.env.msg, tm):
                got_commit.add(e.participant)
            elif isinstance(payload, AbortCert) and verify(e.env.msg, tm):
                got_abort.add(e.participant)
        elif e.rec is Rec.SENT and e.participant == bob:
            payload = e.env.msg.payload
            if isinstance(payload, Certificate) and verify(e.env.msg, bob):
                issued_chi.add(e.participant)
            elif isinstance(payload, CommitReq) and verify(payload.certificate, bob):
                issued_chi.add(e.participant)
        if e.rec is Rec.SENT and isinstance(e.env.msg.payload, Money):
            made_payment.add(e.participant)
    return {
        "balances": balances,
        "terminal": terminal,
        "got_chi": got_chi,
        "got_commit": got_commit,
        "got_abort": got_abort,
        "issued_chi": issued_chi,
        "made_payment": made_payment,
        "below_initial": below_initial,
    }


def brute_force_statuses(trace, bound=None):
    """Each clause evaluated directly from the final-state summary.

    Returns {name: "HOLDS" | "VIOLATED" | "VACUOUS"} for C, T, ES, CS1, CS2,
    CS3, L (and CC on weak traces).
    """
    meta = trace.meta
    weak = meta.variant == "weak"
    s = final_summary(trace)
    compliant = meta.compliant
    init = meta.initial_balances
    out = {}

    # C: no compliant participant logged an impossible step
    impossible = any(e.rec is Rec.IMPOSSIBLE_STEP and e.participant in compliant
                     for e in trace.entries)
    out["C"] = "VIOLATED" if impossible else "HOLDS"

    # T
    if bound is None and not weak:
        from xpay.timing import termination_bound
        bound = termination_bound(meta.params)
    limit = meta.horizon if weak else bound
    decision_issued = any(
        e.rec is Rec.SENT and e.participant == manager()
        and isinstance(e.env.msg.payload, (AbortCert, CommitCert))
        for e in trace.entries)
    evaluated = 0
    bad = 0
    for k in range(meta.n + 1):
        c = customer(k)
        if c not in compliant:
            continue
        her_escrows = [escrow(j) for j in (k - 1, k) if 0 <= j < meta.n]
        if any(e not in compliant for e in her_escrows):
            continue
        if weak:
            patience = meta.patience[k] if meta.patience else None
            if patience is None and not decision_issued:
                continue
        else:
            bob = customer(meta.n)
            active = c in s["made_payment"] or (c == bob and c in s["issued_chi"])
            if not active:
                continue
        evaluated += 1
        hit = s["terminal"].get(c)
        if hit is None or hit[0] > limit:
            bad += 1
    out["T"] = "VIOLATED" if bad else ("HOLDS" if evaluated else "VACUOUS")

    # ES
    evaluated = 0
    bad = 0
    for i in range(meta.n):
        e = escrow(i)
        if e not in compliant:
            continue
        evaluated += 1
        if e in s["below_initial"] or s["balances"][e] < init[e]:
            bad += 1
    out["ES"] = "VIOLATED" if bad else ("HOLDS" if evaluated else "VACUOUS")

    # CS1
    alice = customer(0)
    if alice in compliant and escrow(0) in compliant and alice in s["terminal"]:
        back = s["balances"][alice] >= init[alice]
        cert = alice in (s["got_commit"] if weak else s["got_chi"])
        out["CS1"] = "HOLDS" if back or cert else "VIOLATED"
    else:
        out["CS1"] = "VACUOUS"

    # CS2
    bob = customer(meta.n)
    if bob in compliant and escrow(meta.n - 1) in compliant and bob in s["terminal"]:
        paid = s["balances"][bob] >= init[bob] + meta.amount
        if weak:
            ok = paid or bob in s["got_abort"]
        else:
            ok = paid or bob not in s["issued_chi"]
        out["CS2"] = "HOLDS" if ok else "VIOLATED"
    else:
        out["CS2"] = "VACUOUS"

    # CS3
    evaluated = 0
    bad = 0
    for k in range(1, meta.n):
        c = customer(k)
        if c not in compliant:
            continue
        if escrow(k - 1) not in compliant or escrow(k) not in compliant:
            continue
        if c not in s["terminal"]:
            continue
        evaluated += 1
        if s["balances"][c] < init[c]:
            bad += 1
    out["CS3"] = "VIOLATED" if bad else ("HOLDS" if evaluated else "VACUOUS")

    # L
    if len(compliant) == len(init) and (not weak or meta.patience_sufficient):
        paid = bob in s["terminal"] and s["balances"][bob] >= init[bob] + meta.amount
        out["L"] = "HOLDS" if paid else "VIOLATED"
    else:
        out["L"] = "VACUOUS"

    if weak:
        kinds = set()
        for e in trace.entries:
            if e.rec is Rec.SENT and e.participant == manager():
                if isinstance(e.env.msg.payload, AbortCert):
                    kinds.add("abort")
                elif isinstance(e.env.msg.payload, CommitCert):
                    kinds.add("commit")
        out["CC"] = "VIOLATED" if len(kinds) > 1 else "HOLDS"
    return out


def reachable_from(adjacency: dict[int, set[int]], start: int, vertices: int) -> set[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        v = frontier.pop()
        for w in adjacency.get(v, ()):
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen


def strongly_connected_bruteforce(parties: int, arcs) -> bool:
    """All-pairs reachability by repeated BFS; the oracle for is_well_formed."""
    adjacency: dict[int, set[int]] = {}
    for (i, j) in arcs:
        adjacency.setdefault(i, set()).add(j)
    for v in range(parties):
        if len(reachable_from(adjacency, v, parties)) != parties:
            return False
    return True


def acceptable_by_definition(m, party: int, outcome) -> bool:
    """The payoff definition applied literally: all-or-nothing plus dominance closure.

    Enumerates the base acceptable outcomes (full execution restricted to the
    party, and every no-loss outcome) and asks whether `outcome` dominates one
    of them (loses less and/or gains more).
    """
    executed = set(outcome)
    gains = {a for a in executed if a[1] == party}
    losses = {a for a in executed if a[0] == party}
    all_in = {a for a in m.entries if a[1] == party}
    all_out = {a for a in m.entries if a[0] == party}
    base = [(all_in, all_out), (set(), set())]  # full swap, lose-nothing
    for base_gain, base_loss in base:
        if gains >= base_gain and losses <= base_loss:
            return True
    return False
