"""Concrete participant automata for the chained escrow payment.

Topology: escrows e_0..e_{n-1}, customers c_0..c_n. Customer 0 is Alice,
customer n is Bob, the customers in between are connectors. Customers c_{i-1}
and c_i hold accounts at escrow e_{i-1}, and value moves only along those
edges.

Two constructions are provided:

* the time-bounded ("strong") protocol, where each escrow guarantees its
  depositor resolution within a local duration d_i and promises its downstream
  customer payment against a certificate arriving within a local window a_i;

* the patience-based ("weak") variant, where deposits happen in parallel, a
  trusted transaction manager collects per-hop lock notices plus Bob's commit
  request and issues exactly one of an abort or a commit certificate, and any
  customer may abort after a patience deadline of their own choosing without
  risking value.

The weak construction here is our own; it is validated against the variant's
stated properties by the checker suite rather than against a reference.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .automata import (
    Automaton,
    Forward,
    Fresh,
    LocalClock,
    Receive,
    State,
    StateKind,
    Timeout,
    Transition,
)
from .core import (
    AbortCert,
    AbortReq,
    Certificate,
    CommitCert,
    CommitReq,
    ConfigError,
    Guarantee,
    LockNotice,
    Money,
    Payload,
    ParticipantId,
    Promise,
    SignedMessage,
    SigningKey,
    customer,
    escrow,
    manager,
    sign,
    verify,
)

INPUT = StateKind.INPUT
OUTPUT = StateKind.OUTPUT
TERMINAL = StateKind.TERMINAL

# Terminal state names shared by checkers and tests.
ESCROW_PAID_OUT = "paid_out"
ESCROW_REFUNDED = "refunded"
ALICE_REFUNDED = "refunded"
ALICE_HAS_CERTIFICATE = "has_certificate"
CONNECTOR_REFUNDED = "refunded"
CONNECTOR_PAID = "paid"
BOB_PAID = "paid"
WEAK_COMMITTED = "committed"
WEAK_ABORTED = "aborted"
WEAK_ABORTED_UNFUNDED = "aborted_unfunded"


@dataclass(frozen=True)
class TimingParams:
    """Per-hop protocol parameters, all local-time durations as exact rationals.

    a[i]: escrow i's certificate-acceptance window, counted from the instant it
    issues its downstream promise. d[i]: escrow i's resolution deadline counted
    from deposit receipt. epsilon: pay-after-certificate slack. pi: real-time
    output-state processing budget. delta: the delivery bound the values were
    derived against. rho: clock drift bound. mu: safety margin folded into the
    derived values and the termination bound.
    """
    n: int
    a: tuple[Fraction, ...]
    d: tuple[Fraction, ...]
    epsilon: Fraction
    pi: Fraction
    delta: Fraction
    rho: Fraction
    mu: Fraction = Fraction(0)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("hop count must be at least 1")
        if len(self.a) != self.n or len(self.d) != self.n:
            raise ConfigError("need one a_i and one d_i per hop")
        object.__setattr__(self, "a", tuple(Fraction(x) for x in self.a))
        object.__setattr__(self, "d", tuple(Fraction(x) for x in self.d))
        for name in ("epsilon", "pi", "delta", "rho", "mu"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if any(x <= 0 for x in self.a) or any(x <= 0 for x in self.d):
            raise ConfigError("timeout durations must be strictly positive")
        for i in range(self.n):
            if self.d[i] < self.a[i]:
                raise ConfigError(f"d_{i} < a_{i}: an escrow cannot resolve before its own window closes")
        if self.delta <= 0:
            raise ConfigError("delivery bound must be strictly positive")
        if self.pi < 0 or self.rho < 0 or self.mu < 0 or self.epsilon < 0:
            raise ConfigError("pi, rho, mu, epsilon must be non-negative")


@dataclass(frozen=True)
class PaymentInstance:
    """One payment: its id (bound into every signed payload), hop count, and amount."""
    instance: str
    n: int
    amount: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("hop count must be at least 1")
        if self.amount <= 0:
            raise ConfigError("amount must be strictly positive")

    @property
    def alice(self) -> ParticipantId:
        return customer(0)

    @property
    def bob(self) -> ParticipantId:
        return customer(self.n)

    def escrows(self) -> list[ParticipantId]:
        return [escrow(i) for i in range(self.n)]

    def customers(self) -> list[ParticipantId]:
        return [customer(i) for i in range(self.n + 1)]

    def participants(self, with_manager: bool = False) -> list[ParticipantId]:
        out = self.escrows() + self.customers()
        if with_manager:
            out.append(manager())
        return out

    def escrows_of(self, c: ParticipantId) -> list[ParticipantId]:
        """The escrows a customer holds accounts at (one for Alice and Bob, two for connectors)."""
        i = c.index
        out = []
        if i > 0:
            out.append(escrow(i - 1))
        if i < self.n:
            out.append(escrow(i))
        return out


def _money(pay: PaymentInstance) -> Money:
    return Money(pay.instance, pay.amount)


def _recv_money(pay: PaymentInstance, frm: ParticipantId) -> Receive:
    return Receive(frm, Money, attrs=(("instance", pay.instance), ("amount", pay.amount)))


def _recv_certificate(pay: PaymentInstance, frm: ParticipantId) -> Receive:
    """A certificate relayed by `frm` but necessarily signed by Bob for this instance."""
    return Receive(frm, Certificate, attrs=(("instance", pay.instance),), signed_by=pay.bob)


def _recv_decision(pay: PaymentInstance, kind: type) -> Receive:
    return Receive(manager(), kind, attrs=(("instance", pay.instance),), signed_by=manager())


# ------------------------------------------------------------------ strong variant

def make_escrow(
    i: int,
    params: TimingParams,
    pay: PaymentInstance,
    clock: LocalClock = LocalClock(),
    key: Optional[SigningKey] = None,
) -> Automaton:
    """Escrow e_i of the time-bounded protocol.

    Guarantee out, deposit in, promise out (recording its issue time u), then
    either a verified certificate arrives within the local window u + a_i and
    one resolution step forwards the certificate upstream and the money
    downstream, or the window lapses and the deposit is refunded. Exactly two
    terminal states: paid_out and refunded.
    """
    if not 0 <= i < params.n:
        raise ConfigError(f"escrow index {i} out of range for n={params.n}")
    me = escrow(i)
    up = customer(i)
    down = customer(i + 1)
    states = {
        "send_guarantee": State("send_guarantee", OUTPUT, (
            Transition("await_money", emits=((up, Fresh(Guarantee(pay.instance, params.d[i]))),)),
        )),
        "await_money": State("await_money", INPUT, (
            Transition("send_promise", guard=_recv_money(pay, up)),
        )),
        "send_promise": State("send_promise", OUTPUT, (
            Transition("await_certificate", assign=("u",),
                       emits=((down, Fresh(Promise(pay.instance, params.a[i]))),)),
        )),
        "await_certificate": State("await_certificate", INPUT, (
            Transition("resolve_paid", guard=_recv_certificate(pay, down), capture="chi"),
            Transition("resolve_refund", guard=Timeout(params.a[i], var="u")),
        )),
        # One processing step settles both legs: certificate upstream, money downstream.
        "resolve_paid": State("resolve_paid", OUTPUT, (
            Transition(ESCROW_PAID_OUT, emits=(
                (up, Forward("chi")),
                (down, Fresh(_money(pay))),
            )),
        )),
        "resolve_refund": State("resolve_refund", OUTPUT, (
            Transition(ESCROW_REFUNDED, emits=((up, Fresh(_money(pay))),)),
        )),
        ESCROW_PAID_OUT: State(ESCROW_PAID_OUT, TERMINAL),
        ESCROW_REFUNDED: State(ESCROW_REFUNDED, TERMINAL),
    }
    return Automaton(me, states, "send_guarantee", clock=clock, key=key)


def make_alice(
    params: TimingParams,
    pay: PaymentInstance,
    clock: LocalClock = LocalClock(),
    key: Optional[SigningKey] = None,
) -> Automaton:
    """Customer c_0: pays e_0 once its guarantee arrives, then awaits refund or certificate."""
    e0 = escrow(0)
    states = {
        "await_guarantee": State("await_guarantee", INPUT, (
            Transition("pay_escrow", guard=Receive(
                e0, Guarantee,
                attrs=(("instance", pay.instance), ("resolve_within", params.d[0])),
                signed_by=e0)),
        )),
        "pay_escrow": State("pay_escrow", OUTPUT, (
            Transition("await_outcome", emits=((e0, Fresh(_money(pay))),)),
        )),
        "await_outcome": State("await_outcome", INPUT, (
            Transition(ALICE_REFUNDED, guard=_recv_money(pay, e0)),
            Transition(ALICE_HAS_CERTIFICATE, guard=_recv_certificate(pay, e0), capture="chi"),
        )),
        ALICE_REFUNDED: State(ALICE_REFUNDED, TERMINAL),
        ALICE_HAS_CERTIFICATE: State(ALICE_HAS_CERTIFICATE, TERMINAL),
    }
    return Automaton(customer(0), states, "await_guarantee", clock=clock, key=key)


def make_connector(
    i: int,
    params: TimingParams,
    pay: PaymentInstance,
    clock: LocalClock = LocalClock(),
    key: Optional[SigningKey] = None,
) -> Automaton:
    """Connector c_i (0 < i < n): fronts her own deposit downstream once both the
    downstream guarantee and the upstream promise are in, then either takes the
    refund (done) or relays the certificate upstream and collects the payment."""
    if not 1 <= i <= params.n - 1:
        raise ConfigError(f"connector index {i} out of range for n={params.n}")
    up_escrow = escrow(i - 1)
    down_escrow = escrow(i)
    states = {
        "await_guarantee": State("await_guarantee", INPUT, (
            Transition("await_promise", guard=Receive(
                down_escrow, Guarantee,
                attrs=(("instance", pay.instance), ("resolve_within", params.d[i])),
                signed_by=down_escrow)),
        )),
        "await_promise": State("await_promise", INPUT, (
            Transition("pay_escrow", guard=Receive(
                up_escrow, Promise,
                attrs=(("instance", pay.instance), ("accept_within", params.a[i - 1])),
                signed_by=up_escrow)),
        )),
        "pay_escrow": State("pay_escrow", OUTPUT, (
            Transition("await_outcome", emits=((down_escrow, Fresh(_money(pay))),)),
        )),
        "await_outcome": State("await_outcome", INPUT, (
            Transition(CONNECTOR_REFUNDED, guard=_recv_money(pay, down_escrow)),
            Transition("forward_certificate", guard=_recv_certificate(pay, down_escrow), capture="chi"),
        )),
        "forward_certificate": State("forward_certificate", OUTPUT, (
            Transition("await_payment", emits=((up_escrow, Forward("chi")),)),
        )),
        "await_payment": State("await_payment", INPUT, (
            Transition(CONNECTOR_PAID, guard=_recv_money(pay, up_escrow)),
        )),
        CONNECTOR_REFUNDED: State(CONNECTOR_REFUNDED, TERMINAL),
        CONNECTOR_PAID: State(CONNECTOR_PAID, TERMINAL),
    }
    return Automaton(customer(i), states, "await_guarantee", clock=clock, key=key)


def make_bob(
    params: TimingParams,
    pay: PaymentInstance,
    clock: LocalClock = LocalClock(),
    key: Optional[SigningKey] = None,
) -> Automaton:
    """Customer c_n: issues the certificate against the upstream promise, then awaits payment.

    Structurally issues at most one certificate (single send state), and never
    before a verified promise arrived.
    """
    e = escrow(params.n - 1)
    states = {
        "await_promise": State("await_promise", INPUT, (
            Transition("issue_certificate", guard=Receive(
                e, Promise,
                attrs=(("instance", pay.instance), ("accept_within", params.a[params.n - 1])),
                signed_by=e)),
        )),
        "issue_certificate": State("issue_certificate", OUTPUT, (
            Transition("await_payment", emits=((e, Fresh(Certificate(pay.instance))),)),
        )),
        "await_payment": State("await_payment", INPUT, (
            Transition(BOB_PAID, guard=_recv_money(pay, e)),
        )),
        BOB_PAID: State(BOB_PAID, TERMINAL),
    }
    return Automaton(customer(params.n), states, "await_promise", clock=clock, key=key)


def make_strong_participants(
    params: TimingParams,
    pay: PaymentInstance,
    clocks: Optional[dict[ParticipantId, LocalClock]] = None,
    keys: Optional[dict[ParticipantId, SigningKey]] = None,
) -> dict[ParticipantId, Automaton]:
    """Full roster of the time-bounded protocol, keyed by participant id."""
    clocks = clocks or {}
    keys = keys or {}

    def build(pid, factory, *args):
        return factory(*args, clock=clocks.get(pid, LocalClock()), key=keys.get(pid))

    roster: dict[ParticipantId, Automaton] = {}
    for i in range(params.n):
        roster[escrow(i)] = build(escrow(i), make_escrow, i, params, pay)
    roster[customer(0)] = build(customer(0), make_alice, params, pay)
    for i in range(1, params.n):
        roster[customer(i)] = build(customer(i), make_connector, i, params, pay)
    roster[customer(params.n)] = build(customer(params.n), make_bob, params, pay)
    return roster


# -------------------------------------------------------------------- weak variant

Patience = Optional[Fraction]  # None means unbounded patience


def _weak_escrow(
    i: int,
    params: TimingParams,
    pay: PaymentInstance,
    clock: LocalClock,
    key: Optional[SigningKey],
) -> Automaton:
    """Weak-variant escrow: hold the deposit until the manager's decision.

    On deposit, notify the manager that hop i is locked (the last escrow also
    tells Bob his funding is in place). Release per the decision: pay the
    downstream customer on commit, refund the depositor on abort. An abort
    arriving before the deposit parks the escrow in a watch state that refunds
    a late (already in-flight) deposit, so an abort/deposit race can never
    strand the depositor's money.
    """
    me = escrow(i)
    up = customer(i)
    down = customer(i + 1)
    tm = manager()
    lock_emits: tuple = ((tm, Fresh(LockNotice(pay.instance, i))),)
    if i == params.n - 1:
        lock_emits += ((down, Fresh(LockNotice(pay.instance, i))),)
    states = {
        "send_guarantee": State("send_guarantee", OUTPUT, (
            Transition("await_money", emits=((up, Fresh(Guarantee(pay.instance, params.d[i]))),)),
        )),
        "await_money": State("await_money", INPUT, (
            Transition("notify_lock", guard=_recv_money(pay, up)),
            Transition("await_stray_deposit", guard=_recv_decision(pay, AbortCert)),
        )),
        "notify_lock": State("notify_lock", OUTPUT, (
            Transition("await_decision", emits=lock_emits),
        )),
        "await_decision": State("await_decision", INPUT, (
            Transition("pay_downstream", guard=_recv_decision(pay, CommitCert)),
            Transition("refund", guard=_recv_decision(pay, AbortCert)),
        )),
        "pay_downstream": State("pay_downstream", OUTPUT, (
            Transition(ESCROW_PAID_OUT, emits=((down, Fresh(_money(pay))),)),
        )),
        "refund": State("refund", OUTPUT, (
            Transition(ESCROW_REFUNDED, emits=((up, Fresh(_money(pay))),)),
        )),
        "await_stray_deposit": State("await_stray_deposit", INPUT, (
            Transition("refund", guard=_recv_money(pay, up)),
        )),
        ESCROW_PAID_OUT: State(ESCROW_PAID_OUT, TERMINAL),
        ESCROW_REFUNDED: State(ESCROW_REFUNDED, TERMINAL),
    }
    return Automaton(me, states, "send_guarantee", clock=clock, key=key)


def _weak_depositor(
    i: int,
    params: TimingParams,
    pay: PaymentInstance,
    patience: Patience,
    clock: LocalClock,
    key: Optional[SigningKey],
) -> Automaton:
    """Weak-variant customer c_i for i < n (Alice or a connector).

    Deposits with e_i after its guarantee; on commit, Alice keeps the commit
    certificate as her proof while a connector collects the upstream payment;
    on abort, the refund comes back from e_i. A finite patience deadline (local
    clock, measured from start) turns into an abort request at any waiting
    point; the manager's answer is still awaited, so aborting never loses value.
    """
    me = customer(i)
    dep_escrow = escrow(i)
    up_escrow = escrow(i - 1) if i > 0 else None
    tm = manager()

    def timeouts(target: str) -> tuple:
        if patience is None:
            return ()
        return (Transition(target, guard=Timeout(patience)),)

    recv_commit = _recv_decision(pay, CommitCert)
    recv_abort = _recv_decision(pay, AbortCert)
    if i == 0:
        commit_target = WEAK_COMMITTED
    else:
        commit_target = "await_payment"

    decision_transitions = (
        Transition(commit_target, guard=recv_commit),
        Transition("await_refund", guard=recv_abort),
    )
    states = {
        "await_guarantee": State("await_guarantee", INPUT, (
            Transition("pay_escrow", guard=Receive(
                dep_escrow, Guarantee,
                attrs=(("instance", pay.instance), ("resolve_within", params.d[i])),
                signed_by=dep_escrow)),
            Transition(WEAK_ABORTED_UNFUNDED, guard=recv_abort),
        ) + timeouts("request_abort_unfunded")),
        "request_abort_unfunded": State("request_abort_unfunded", OUTPUT, (
            Transition("await_decision_unfunded", emits=((tm, Fresh(AbortReq(pay.instance))),)),
        )),
        "await_decision_unfunded": State("await_decision_unfunded", INPUT, (
            Transition(WEAK_ABORTED_UNFUNDED, guard=recv_abort),
        )),
        "pay_escrow": State("pay_escrow", OUTPUT, (
            Transition("await_decision", emits=((dep_escrow, Fresh(_money(pay))),)),
        )),
        "await_decision": State("await_decision", INPUT,
                                decision_transitions + timeouts("request_abort")),
        "request_abort": State("request_abort", OUTPUT, (
            Transition("await_decision_final", emits=((tm, Fresh(AbortReq(pay.instance))),)),
        )),
        "await_decision_final": State("await_decision_final", INPUT, decision_transitions),
        "await_refund": State("await_refund", INPUT, (
            Transition(CONNECTOR_REFUNDED, guard=_recv_money(pay, dep_escrow)),
        )),
        CONNECTOR_REFUNDED: State(CONNECTOR_REFUNDED, TERMINAL),
        WEAK_ABORTED_UNFUNDED: State(WEAK_ABORTED_UNFUNDED, TERMINAL),
    }
    if i == 0:
        states[WEAK_COMMITTED] = State(WEAK_COMMITTED, TERMINAL)
    else:
        states["await_payment"] = State("await_payment", INPUT, (
            Transition(CONNECTOR_PAID, guard=_recv_money(pay, up_escrow)),
        ))
        states[CONNECTOR_PAID] = State(CONNECTOR_PAID, TERMINAL)
    return Automaton(me, states, "await_guarantee", clock=clock, key=key)


def _weak_bob(
    params: TimingParams,
    pay: PaymentInstance,
    patience: Patience,
    clock: LocalClock,
    key: SigningKey,
) -> Automaton:
    """Weak-variant Bob: after the last escrow confirms funding, send the manager a
    commit request carrying the payment certificate, then await the decision and,
    on commit, the payment. The inner certificate is signed with Bob's own key up
    front; it leaves his hands only inside the commit request."""
    me = pay.bob
    e = escrow(params.n - 1)
    tm = manager()
    chi = sign(Certificate(pay.instance), me, key)
    recv_commit = _recv_decision(pay, CommitCert)
    recv_abort = _recv_decision(pay, AbortCert)

    def timeouts(target: str) -> tuple:
        if patience is None:
            return ()
        return (Transition(target, guard=Timeout(patience)),)

    decision_transitions = (
        Transition("await_payment", guard=recv_commit),
        Transition(WEAK_ABORTED, guard=recv_abort),
    )
    states = {
        "await_funding_notice": State("await_funding_notice", INPUT, (
            Transition("request_commit", guard=Receive(
                e, LockNotice,
                attrs=(("instance", pay.instance), ("escrow_index", params.n - 1)),
                signed_by=e)),
            Transition(WEAK_ABORTED, guard=recv_abort),
        ) + timeouts("request_abort_unfunded")),
        "request_abort_unfunded": State("request_abort_unfunded", OUTPUT, (
            Transition("await_decision_unfunded", emits=((tm, Fresh(CommitReq(pay.instance, chi))),)),
        )),
        "request_commit": State("request_commit", OUTPUT, (
            Transition("await_decision", emits=((tm, Fresh(CommitReq(pay.instance, chi))),)),
        )),
        "await_decision": State("await_decision", INPUT,
                                decision_transitions + timeouts("request_abort")),
        "request_abort": State("request_abort", OUTPUT, (
            Transition("await_decision_final", emits=((tm, Fresh(AbortReq(pay.instance))),)),
        )),
        "await_decision_final": State("await_decision_final", INPUT, decision_transitions),
        "await_decision_unfunded": State("await_decision_unfunded", INPUT, decision_transitions),
        "await_payment": State("await_payment", INPUT, (
            Transition(BOB_PAID, guard=_recv_money(pay, e)),
        )),
        BOB_PAID: State(BOB_PAID, TERMINAL),
        WEAK_ABORTED: State(WEAK_ABORTED, TERMINAL),
    }
    return Automaton(me, states, "await_funding_notice", clock=clock, key=key)


def make_weak_participants(
    params: TimingParams,
    pay: PaymentInstance,
    patience: Sequence[Patience],
    clocks: Optional[dict[ParticipantId, LocalClock]] = None,
    keys: Optional[dict[ParticipantId, SigningKey]] = None,
) -> dict[ParticipantId, Automaton]:
    """Weak-variant roster (escrows and customers; the manager is built separately).

    `patience` has one entry per customer c_0..c_n; None means unbounded.
    """
    if len(patience) != params.n + 1:
        raise ConfigError(f"need {params.n + 1} patience entries, got {len(patience)}")
    norm: list[Patience] = []
    for p in patience:
        if p is None:
            norm.append(None)
        else:
            p = Fraction(p)
            if p < 0:
                raise ConfigError("patience must be non-negative or unbounded")
            norm.append(p)
    clocks = clocks or {}
    keys = keys or {}

    roster: dict[ParticipantId, Automaton] = {}
    for i in range(params.n):
        pid = escrow(i)
        roster[pid] = _weak_escrow(i, params, pay, clocks.get(pid, LocalClock()), keys.get(pid))
    for i in range(params.n):
        pid = customer(i)
        roster[pid] = _weak_depositor(i, params, pay, norm[i],
                                      clocks.get(pid, LocalClock()), keys.get(pid))
    bob = pay.bob
    bob_key = keys.get(bob) or SigningKey(bob)
    roster[bob] = _weak_bob(params, pay, norm[params.n], clocks.get(bob, LocalClock()), bob_key)
    return roster


# -------------------------------------------------------------- transaction manager

def make_transaction_manager(
    n: int,
    pay: PaymentInstance,
    clock: LocalClock = LocalClock(),
    key: Optional[SigningKey] = None,
) -> Automaton:
    """The trusted decider of the weak variant.

    Collects lock notices from the n escrows and Bob's commit request (whose
    inner certificate must verify as Bob's). Decides exactly once: commit when
    everything is in and no abort came first, abort on the first abort request
    before a decision. The decision is broadcast to every escrow and customer,
    and any request arriving after the decision is answered with the recorded
    decision, so latecomers always converge.
    """
    if n < 1:
        raise ConfigError("hop count must be at least 1")
    me = manager()
    bob = customer(n)
    full = (1 << n) - 1

    def chi_valid(payload: Payload) -> bool:
        cert = payload.certificate
        return (
            isinstance(cert, SignedMessage)
            and isinstance(cert.payload, Certificate)
            and cert.payload.instance == pay.instance
            and verify(cert, bob)
        )

    recv_commit_req = Receive(bob, CommitReq, attrs=(("instance", pay.instance),), where=chi_valid)

    def collect_name(mask: int, chi: bool) -> str:
        return f"collect_{mask:0{n}b}_{'x' if chi else '-'}"

    everyone = [escrow(i) for i in range(n)] + [customer(k) for k in range(n + 1)]
    states: dict[str, State] = {}

    for mask in range(full + 1):
        for chi in (False, True):
            if mask == full and chi:
                continue  # that configuration decides commit immediately
            transitions: list[Transition] = []
            for i in range(n):
                if mask & (1 << i):
                    continue
                new_mask = mask | (1 << i)
                target = "decide_commit" if (new_mask == full and chi) else collect_name(new_mask, chi)
                transitions.append(Transition(target, guard=Receive(
                    escrow(i), LockNotice,
                    attrs=(("instance", pay.instance), ("escrow_index", i)),
                    signed_by=escrow(i))))
            if not chi:
                target = "decide_commit" if mask == full else collect_name(mask, True)
                transitions.append(Transition(target, guard=recv_commit_req, capture="creq"))
            for k in range(n + 1):
                transitions.append(Transition("decide_abort", guard=Receive(
                    customer(k), AbortReq, attrs=(("instance", pay.instance),),
                    signed_by=customer(k))))
            name = collect_name(mask, chi)
            states[name] = State(name, INPUT, tuple(transitions))

    states["decide_commit"] = State("decide_commit", OUTPUT, (
        Transition("decided_commit",
                   emits=tuple((p, Fresh(CommitCert(pay.instance))) for p in everyone)),
    ))
    states["decide_abort"] = State("decide_abort", OUTPUT, (
        Transition("decided_abort",
                   emits=tuple((p, Fresh(AbortCert(pay.instance))) for p in everyone)),
    ))

    for decision, cert_type in (("commit", CommitCert), ("abort", AbortCert)):
        decided = f"decided_{decision}"
        transitions = []
        for k in range(n + 1):
            answer = f"reanswer_{decision}_c{k}"
            transitions.append(Transition(answer, guard=Receive(
                customer(k), AbortReq, attrs=(("instance", pay.instance),),
                signed_by=customer(k))))
            states[answer] = State(answer, OUTPUT, (
                Transition(decided, emits=((customer(k), Fresh(cert_type(pay.instance))),)),
            ))
        late_commit = f"reanswer_{decision}_creq"
        transitions.append(Transition(late_commit, guard=recv_commit_req))
        states[late_commit] = State(late_commit, OUTPUT, (
            Transition(decided, emits=((bob, Fresh(cert_type(pay.instance))),)),
        ))
        states[decided] = State(decided, INPUT, tuple(transitions))

    return Automaton(me, states, collect_name(0, False), clock=clock, key=key)
