"""Verdicts over completed traces.

Each checker is a pure function of the trace. Conditional clauses are
evaluated only when their named participants are compliant ("provided her
escrows abide"); a clause whose precondition never applies comes back VACUOUS.
Violations always carry a witness: the indices of the trace entries that
substantiate them, minimal enough that replaying just the witness-relevant
participants' entries re-triggers the same verdict.

"Got her money back" is interpreted as net balance change >= 0 at the
participant's termination entry (exact refund equals net zero with uniform
amounts; commissions are out of scope). "Upon termination" clauses are
evaluated at each participant's terminal entry; participants that never
terminate leave the clause vacuous, except where termination itself is the
property under check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from .core import (
    AbortCert,
    Certificate,
    CommitCert,
    CommitReq,
    Money,
    ParticipantId,
    customer,
    escrow,
    manager,
    verify,
)
from .trace import Rec, Trace, TraceEntry


class Status(Enum):
    HOLDS = "HOLDS"
    VIOLATED = "VIOLATED"
    VACUOUS = "VACUOUS"
    INAPPLICABLE = "INAPPLICABLE"


@dataclass
class Verdict:
    name: str
    status: Status
    witness: list[int] = field(default_factory=list)
    detail: str = ""

    @property
    def holds(self) -> bool:
        return self.status is not Status.VIOLATED

    def line(self) -> str:
        out = f"{self.name}: {self.status.value}"
        if self.detail:
            out += f" ({self.detail})"
        if self.status is Status.VIOLATED and self.witness:
            out += f" witness={self.witness}"
        return out


# ------------------------------------------------------------------ trace helpers

def _is_chi(msg, trace: Trace) -> bool:
    bob = customer(trace.meta.n)
    return (isinstance(msg.payload, Certificate)
            and msg.payload.instance == trace.meta.instance
            and verify(msg, bob))


def _carries_own_certificate(entry: TraceEntry, trace: Trace) -> bool:
    """Did this SENT entry put the sender's own payment certificate on the wire?"""
    msg = entry.env.msg
    bob = customer(trace.meta.n)
    if entry.participant != bob:
        return False
    if _is_chi(msg, trace):
        return True
    return isinstance(msg.payload, CommitReq) and _is_chi(msg.payload.certificate, trace)


def _received_chi(trace: Trace, p: ParticipantId, upto: Optional[int]) -> Optional[int]:
    for idx, e in enumerate(trace.entries):
        if upto is not None and idx > upto:
            break
        if e.rec is Rec.DELIVERED and e.participant == p and _is_chi(e.env.msg, trace):
            return idx
    return None


def _received_decision(trace: Trace, p: ParticipantId, kind: type, upto: Optional[int]) -> Optional[int]:
    tm = manager()
    for idx, e in enumerate(trace.entries):
        if upto is not None and idx > upto:
            break
        if (e.rec is Rec.DELIVERED and e.participant == p
                and isinstance(e.env.msg.payload, kind)
                and e.env.msg.payload.instance == trace.meta.instance
                and verify(e.env.msg, tm)):
            return idx
    return None


def _made_payment(trace: Trace, p: ParticipantId) -> Optional[int]:
    for idx, e in enumerate(trace.entries):
        if e.rec is Rec.SENT and e.participant == p and isinstance(e.env.msg.payload, Money):
            return idx
    return None


def _issued_certificate(trace: Trace, p: ParticipantId, upto: Optional[int] = None) -> Optional[int]:
    for idx, e in enumerate(trace.entries):
        if upto is not None and idx > upto:
            break
        if e.rec is Rec.SENT and e.participant == p and _carries_own_certificate(e, trace):
            return idx
    return None


def _witness_for(trace: Trace, pids: list[ParticipantId]) -> list[int]:
    wanted = set(pids)
    return [i for i, e in enumerate(trace.entries) if e.participant in wanted]


def _escrows_of(trace: Trace, c: ParticipantId) -> list[ParticipantId]:
    out = []
    if c.index > 0:
        out.append(escrow(c.index - 1))
    if c.index < trace.meta.n:
        out.append(escrow(c.index))
    return out


def _compliant(trace: Trace, p: ParticipantId) -> bool:
    return p in trace.meta.compliant


def _summarize(evaluated: int, violations: list[int]) -> Status:
    if violations:
        return Status.VIOLATED
    return Status.HOLDS if evaluated else Status.VACUOUS


# ---------------------------------------------------------------------- checkers

def check_consistency(trace: Trace) -> Verdict:
    """No compliant participant ever hit an impossible prescribed step."""
    witness = [i for i, e in enumerate(trace.entries)
               if e.rec is Rec.IMPOSSIBLE_STEP and _compliant(trace, e.participant)]
    if witness:
        return Verdict("C", Status.VIOLATED, witness, "impossible prescribed step")
    return Verdict("C", Status.HOLDS)


EVENTUAL = "eventual"


def check_termination(trace: Trace, bound=None) -> Verdict:
    """Customers finish in time.

    Time-bounded mode (the default for strong traces): every compliant customer
    that made a payment or issued a certificate, and whose escrows are
    compliant, reaches a terminal state within `bound` of scenario start.
    Eventual mode (weak traces, or bound=EVENTUAL): every compliant customer
    with compliant escrows terminates within the horizon; customers who chose
    unbounded patience are exempt when no decision was ever issued.
    """
    meta = trace.meta
    eventual = meta.variant == "weak" or bound == EVENTUAL
    if eventual:
        limit = meta.horizon
    else:
        if bound is None:
            from .timing import termination_bound
            limit = termination_bound(meta.params)
        else:
            limit = Fraction(bound)

    decision_issued = any(
        e.rec is Rec.SENT and e.participant == manager()
        and isinstance(e.env.msg.payload, (AbortCert, CommitCert))
        for e in trace.entries
    ) if eventual else False

    evaluated = 0
    violations: list[int] = []
    details = []
    for k in range(meta.n + 1):
        c = customer(k)
        if not _compliant(trace, c):
            continue
        if any(not _compliant(trace, e) for e in _escrows_of(trace, c)):
            continue
        if eventual:
            patience = meta.patience[k] if meta.patience else None
            if patience is None and not decision_issued:
                continue  # waiting forever was this customer's own choice
        else:
            if _made_payment(trace, c) is None and _issued_certificate(trace, c) is None:
                continue
        evaluated += 1
        hit = trace.terminal_entry(c)
        if hit is None:
            violations.extend(_witness_for(trace, [c]))
            details.append(f"{c} never terminal")
        elif hit[1].t > limit:
            violations.append(hit[0])
            details.append(f"{c} terminal at t={hit[1].t} > {limit}")
    return Verdict("T", _summarize(evaluated, violations), violations, "; ".join(details))


def check_escrow_security(trace: Trace) -> Verdict:
    """No compliant escrow ever dips below its initial balance, and ends at or above it."""
    evaluated = 0
    violations: list[int] = []
    details = []
    for i in range(trace.meta.n):
        e = escrow(i)
        if not _compliant(trace, e):
            continue
        evaluated += 1
        net = 0
        for idx, entry in enumerate(trace.entries):
            if entry.rec is not Rec.TRANSFERRED:
                continue
            if entry.phase == "sent" and entry.frm == e:
                net -= entry.amount
            elif entry.phase == "received" and entry.to == e:
                net += entry.amount
            if net < 0:
                violations.append(idx)
                details.append(f"{e} below initial balance at t={entry.t}")
                break
    return Verdict("ES", _summarize(evaluated, violations), violations, "; ".join(details))


@dataclass
class CustomerSecurity:
    cs1: Verdict
    cs2: Verdict
    cs3: Verdict

    def all(self) -> list[Verdict]:
        return [self.cs1, self.cs2, self.cs3]


def check_customer_security(trace: Trace) -> CustomerSecurity:
    """The three per-role safety clauses, strong or weak wording per the trace variant.

    CS1 (Alice, her escrow compliant, at her termination): money back, or the
    certificate (strong) / the commit certificate (weak).
    CS2 (Bob, his escrow compliant, at his termination): the money, or no
    certificate issued (strong) / the abort certificate received (weak).
    CS3 (each connector with both her escrows compliant, at her termination):
    money back.
    """
    meta = trace.meta
    weak = meta.variant == "weak"
    alice = customer(0)
    bob = customer(meta.n)

    # CS1
    if _compliant(trace, alice) and _compliant(trace, escrow(0)):
        hit = trace.terminal_entry(alice)
        if hit is None:
            cs1 = Verdict("CS1", Status.VACUOUS, detail="alice never terminal")
        else:
            idx, _ = hit
            money_back = trace.net_change(alice, upto=idx) >= 0
            if weak:
                got_cert = _received_decision(trace, alice, CommitCert, idx) is not None
            else:
                got_cert = _received_chi(trace, alice, idx) is not None
            if money_back or got_cert:
                cs1 = Verdict("CS1", Status.HOLDS)
            else:
                cs1 = Verdict("CS1", Status.VIOLATED, _witness_for(trace, [alice]),
                              "alice lost value without the certificate")
    else:
        cs1 = Verdict("CS1", Status.VACUOUS)

    # CS2
    if _compliant(trace, bob) and _compliant(trace, escrow(meta.n - 1)):
        hit = trace.terminal_entry(bob)
        if hit is None:
            cs2 = Verdict("CS2", Status.VACUOUS, detail="bob never terminal")
        else:
            idx, _ = hit
            got_money = trace.net_change(bob, upto=idx) >= meta.amount
            if weak:
                ok = got_money or _received_decision(trace, bob, AbortCert, idx) is not None
                why = "bob has neither the money nor the abort certificate"
            else:
                ok = got_money or _issued_certificate(trace, bob, idx) is None
                why = "bob issued the certificate but was not paid"
            if ok:
                cs2 = Verdict("CS2", Status.HOLDS)
            else:
                cs2 = Verdict("CS2", Status.VIOLATED, _witness_for(trace, [bob]), why)
    else:
        cs2 = Verdict("CS2", Status.VACUOUS)

    # CS3
    evaluated = 0
    violations: list[int] = []
    details = []
    for k in range(1, meta.n):
        c = customer(k)
        if not _compliant(trace, c):
            continue
        if any(not _compliant(trace, e) for e in _escrows_of(trace, c)):
            continue
        hit = trace.terminal_entry(c)
        if hit is None:
            continue
        evaluated += 1
        if trace.net_change(c, upto=hit[0]) < 0:
            violations.extend(_witness_for(trace, [c]))
            details.append(f"{c} terminated below her starting balance")
    cs3 = Verdict("CS3", _summarize(evaluated, violations), violations, "; ".join(details))
    return CustomerSecurity(cs1, cs2, cs3)


def check_liveness(trace: Trace) -> Verdict:
    """Bob is paid eventually, contingent on everybody abiding (and, weak mode,
    on the customers having waited long enough)."""
    meta = trace.meta
    if len(meta.compliant) != len(meta.initial_balances):
        return Verdict("L", Status.VACUOUS, detail="byzantine participants present")
    if meta.variant == "weak" and not meta.patience_sufficient:
        return Verdict("L", Status.VACUOUS, detail="patience declared insufficient")
    bob = customer(meta.n)
    hit = trace.terminal_entry(bob)
    if hit is not None and trace.net_change(bob, upto=hit[0]) >= meta.amount:
        return Verdict("L", Status.HOLDS)
    return Verdict("L", Status.VIOLATED, _witness_for(trace, [bob]), "bob was not paid")


def check_certificate_consistency(trace: Trace) -> Verdict:
    """Weak variant only: the manager never issues both certificate kinds."""
    if trace.meta.variant != "weak":
        return Verdict("CC", Status.INAPPLICABLE)
    tm = manager()
    kinds: dict[str, int] = {}
    for idx, e in enumerate(trace.entries):
        if e.rec is Rec.SENT and e.participant == tm:
            payload = e.env.msg.payload
            if isinstance(payload, (AbortCert, CommitCert)):
                kinds.setdefault(type(payload).__name__, idx)
    if len(kinds) > 1:
        return Verdict("CC", Status.VIOLATED, sorted(kinds.values()),
                       "both certificate kinds issued")
    return Verdict("CC", Status.HOLDS)


def check_conservation(trace: Trace) -> Verdict:
    """At every prefix, balances plus in-flight value sum to the initial total,
    and nothing ever goes negative."""
    balances = dict(trace.meta.initial_balances)
    in_flight = 0
    expected = sum(balances.values())
    for idx, e in enumerate(trace.entries):
        if e.rec is not Rec.TRANSFERRED:
            continue
        if e.phase == "sent":
            balances[e.frm] = balances.get(e.frm, 0) - e.amount
            in_flight += e.amount
            if balances[e.frm] < 0:
                return Verdict("CONS", Status.VIOLATED, [idx], f"{e.frm} went negative")
        else:
            in_flight -= e.amount
            balances[e.to] = balances.get(e.to, 0) + e.amount
            if in_flight < 0:
                return Verdict("CONS", Status.VIOLATED, [idx], "in-flight value went negative")
        if sum(balances.values()) + in_flight != expected:
            return Verdict("CONS", Status.VIOLATED, [idx], "total value changed")
    return Verdict("CONS", Status.HOLDS)


def check_authentication(trace: Trace) -> Verdict:
    """Every message on the wire is either signed by its transmitter or a replay of
    a message the transmitter had already observed; every verified delivery has a
    matching send. Byzantine containment, re-derived from the trace alone."""
    violations: list[int] = []
    details = []
    seen_by: dict[ParticipantId, set] = {}
    sent_keys: set = set()
    for idx, e in enumerate(trace.entries):
        if e.rec is Rec.SENT:
            msg = e.env.msg
            key = (msg.signer, msg.nonce, msg.payload)
            sent_keys.add(key)
            if msg.signer != e.participant and key not in seen_by.get(e.participant, set()):
                violations.append(idx)
                details.append(f"{e.participant} emitted {msg.token()} it never observed")
        elif e.rec is Rec.DELIVERED:
            msg = e.env.msg
            key = (msg.signer, msg.nonce, msg.payload)
            if key not in sent_keys:
                violations.append(idx)
                details.append(f"{msg.token()} delivered without a matching send")
            seen_by.setdefault(e.participant, set()).add(key)
    if violations:
        return Verdict("AUTH", Status.VIOLATED, violations, "; ".join(details))
    return Verdict("AUTH", Status.HOLDS)


def check_promises(trace: Trace) -> list[Verdict]:
    """The two escrow promises, replayed against the trace timestamps.

    Resolution promise: if a compliant escrow received the deposit at its local
    time w, it sent the depositor money or the certificate by local w + d_i.
    Payment promise: if a verified certificate reached it at local v within the
    acceptance window, it sent the downstream payment by local v + epsilon.
    """
    meta = trace.meta
    params = meta.params
    g_eval = 0
    g_viol: list[int] = []
    p_eval = 0
    p_viol: list[int] = []
    for i in range(meta.n):
        e = escrow(i)
        if not _compliant(trace, e):
            continue
        up = customer(i)
        down = customer(i + 1)
        deposit_local = None
        promise_local = None
        chi_local = None
        resolved_up = None
        paid_down = None
        for idx, entry in enumerate(trace.entries):
            if entry.participant != e:
                continue
            if (entry.rec is Rec.DELIVERED and deposit_local is None
                    and entry.env.src == up and isinstance(entry.env.msg.payload, Money)):
                deposit_local = entry.local
            elif entry.rec is Rec.SENT:
                payload = entry.env.msg.payload
                if entry.env.dst == down and payload.__class__.__name__ == "Promise":
                    if promise_local is None:
                        promise_local = entry.local
                elif entry.env.dst == up and (isinstance(payload, Money)
                                              or _is_chi(entry.env.msg, trace)):
                    if resolved_up is None:
                        resolved_up = (idx, entry.local)
                elif entry.env.dst == down and isinstance(payload, Money):
                    if paid_down is None:
                        paid_down = (idx, entry.local)
            elif (entry.rec is Rec.DELIVERED and chi_local is None
                    and entry.env.src == down and _is_chi(entry.env.msg, trace)):
                chi_local = entry.local
        if deposit_local is not None:
            g_eval += 1
            deadline = deposit_local + params.d[i]
            if resolved_up is None or resolved_up[1] > deadline:
                g_viol.extend(_witness_for(trace, [e]))
        if promise_local is not None and chi_local is not None and chi_local < promise_local + params.a[i]:
            # a certificate that raced ahead of the promise counts as received
            # the instant the promise (and with it the obligation) came to be
            v_eff = max(chi_local, promise_local)
            p_eval += 1
            deadline = v_eff + params.epsilon
            if paid_down is None or paid_down[1] > deadline:
                p_viol.extend(_witness_for(trace, [e]))
    return [
        Verdict("G_PROMISE", _summarize(g_eval, g_viol), g_viol),
        Verdict("P_PROMISE", _summarize(p_eval, p_viol), p_viol),
    ]


STRONG_PROPERTIES = ("C", "T", "ES", "CS1", "CS2", "CS3", "L", "CONS", "AUTH")
WEAK_PROPERTIES = ("C", "T", "ES", "CS1", "CS2", "CS3", "L", "CC", "CONS", "AUTH")
SAFETY_PROPERTIES = ("C", "ES", "CS1", "CS2", "CS3", "CC", "CONS", "AUTH")


def property_names(variant: str) -> tuple[str, ...]:
    return WEAK_PROPERTIES if variant == "weak" else STRONG_PROPERTIES


def evaluate_all(trace: Trace, bound=None, include_promises: bool = False) -> list[Verdict]:
    """Every applicable verdict for the trace, in report order."""
    cs = check_customer_security(trace)
    verdicts = [
        check_consistency(trace),
        check_termination(trace, bound=bound),
        check_escrow_security(trace),
        cs.cs1,
        cs.cs2,
        cs.cs3,
        check_liveness(trace),
    ]
    if trace.meta.variant == "weak":
        verdicts.append(check_certificate_consistency(trace))
    verdicts.append(check_conservation(trace))
    verdicts.append(check_authentication(trace))
    if include_promises:
        verdicts.extend(check_promises(trace))
    return verdicts


def safety_verdicts(trace: Trace) -> list[Verdict]:
    """The unconditional-safety subset used by exhaustive exploration."""
    cs = check_customer_security(trace)
    verdicts = [
        check_consistency(trace),
        check_escrow_security(trace),
        cs.cs1,
        cs.cs2,
        cs.cs3,
        check_conservation(trace),
        check_authentication(trace),
    ]
    if trace.meta.variant == "weak":
        verdicts.append(check_certificate_consistency(trace))
    return verdicts
