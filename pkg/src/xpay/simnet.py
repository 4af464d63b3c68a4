"""Deterministic discrete-event network for the payment protocols.

One simulation is one sequential event loop over a heap ordered by
(real_time, sequence). All delays come either from a seeded generator on a
finite grid or from an explicit script, all clocks are exact rationals, so a
Scenario (seed included) maps to exactly one trace, byte for byte.

Byzantine participants are driven by strategy objects instead of (or wrapped
around) their protocol automaton. A strategy can observe everything delivered
to it, drop or postpone its own prescribed sends, and emit anything it can
legitimately construct: messages signed with its own key, or verbatim replays
of messages it has seen. It can never fabricate another participant's
signature; `byzantine_emit` is the chokepoint that enforces this.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .automata import Automaton, LocalClock, StateKind, Timeout
from .core import (
    AbortReq,
    Certificate,
    CommitReq,
    ConfigError,
    Envelope,
    InsufficientFunds,
    Ledger,
    Money,
    Payload,
    ParticipantId,
    ParticipantKind,
    SigningKey,
    SignedMessage,
    customer,
    escrow,
    fmt_fraction,
    manager,
    sign,
    verify,
)
from .protocol import (
    PaymentInstance,
    TimingParams,
    make_strong_participants,
    make_transaction_manager,
    make_weak_participants,
)
from .trace import (
    Rec,
    STOP_ALL_TERMINAL,
    STOP_HORIZON,
    STOP_QUEUE_EMPTY,
    Trace,
    TraceEntry,
    TraceMeta,
)


class ForgeryRejected(Exception):
    """A Byzantine strategy tried to emit a message it cannot legitimately produce."""


class ConsistencyViolation(Exception):
    """A compliant automaton was prescribed an impossible step (strict mode only)."""


class HorizonExceeded(Exception):
    """The horizon cut a run short (strict mode only)."""


# ----------------------------------------------------------------- delay models

def _default_grid(delta: Fraction, points: int = 4) -> tuple[Fraction, ...]:
    return tuple(delta * k / points for k in range(1, points + 1))


def _check_grid(grid: Sequence[Fraction], delta: Fraction) -> tuple[Fraction, ...]:
    out = tuple(Fraction(g) for g in grid)
    if not out:
        raise ConfigError("delay grid must be non-empty")
    for g in out:
        if not 0 < g <= delta:
            raise ConfigError(f"grid delay {g} outside (0, {delta}]")
    return out


@dataclass
class Synchronous:
    """Every delivery within (0, delta], sampled from a finite grid by the run's RNG."""
    delta: Fraction
    grid: Optional[tuple[Fraction, ...]] = None

    def __post_init__(self):
        self.delta = Fraction(self.delta)
        if self.delta <= 0:
            raise ConfigError("delivery bound must be strictly positive")
        self.grid = _check_grid(self.grid or _default_grid(self.delta), self.delta)

    def delta_bound(self) -> Optional[Fraction]:
        return self.delta

    def delay_for(self, env: Envelope, t: Fraction, rng: random.Random, index: int) -> Fraction:
        return self.grid[rng.randrange(len(self.grid))]

    def to_config(self) -> dict:
        return {"kind": "synchronous", "delta": fmt_fraction(self.delta),
                "grid": [fmt_fraction(g) for g in self.grid]}


@dataclass
class PartialSync:
    """Messages sent after the stabilization time arrive within delta; earlier
    messages are delayed arbitrarily but delivered eventually (here: shortly
    after stabilization)."""
    gst: Fraction
    delta: Fraction
    grid: Optional[tuple[Fraction, ...]] = None

    def __post_init__(self):
        self.gst = Fraction(self.gst)
        self.delta = Fraction(self.delta)
        if self.delta <= 0:
            raise ConfigError("delivery bound must be strictly positive")
        if self.gst < 0:
            raise ConfigError("stabilization time must be non-negative")
        self.grid = _check_grid(self.grid or _default_grid(self.delta), self.delta)

    def delta_bound(self) -> Optional[Fraction]:
        return self.delta

    def delay_for(self, env: Envelope, t: Fraction, rng: random.Random, index: int) -> Fraction:
        base = self.grid[rng.randrange(len(self.grid))]
        if t < self.gst:
            return (self.gst - t) + base
        return base

    def to_config(self) -> dict:
        return {"kind": "partial_sync", "gst": fmt_fraction(self.gst),
                "delta": fmt_fraction(self.delta), "grid": [fmt_fraction(g) for g in self.grid]}


_PAYLOAD_NAMES = {
    "Guarantee": "guarantee", "Promise": "promise", "Money": "money",
    "Certificate": "certificate", "AbortCert": "abort_cert", "CommitCert": "commit_cert",
    "LockNotice": "lock_notice", "CommitReq": "commit_req", "AbortReq": "abort_req",
}


def payload_kind(payload: Payload) -> str:
    return _PAYLOAD_NAMES[type(payload).__name__]


@dataclass(frozen=True)
class ScriptRule:
    """Match on any subset of (src, dst, payload kind); first matching rule wins."""
    delay: Fraction
    src: Optional[ParticipantId] = None
    dst: Optional[ParticipantId] = None
    payload: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "delay", Fraction(self.delay))
        if self.delay <= 0:
            raise ConfigError("scripted delay must be strictly positive")
        if self.payload is not None and self.payload not in _PAYLOAD_NAMES.values():
            raise ConfigError(f"unknown payload kind {self.payload!r}")

    def matches(self, env: Envelope) -> bool:
        if self.src is not None and env.src != self.src:
            return False
        if self.dst is not None and env.dst != self.dst:
            return False
        if self.payload is not None and payload_kind(env.msg.payload) != self.payload:
            return False
        return True

    def to_config(self) -> dict:
        out: dict = {"delay": fmt_fraction(self.delay)}
        if self.src is not None:
            out["src"] = str(self.src)
        if self.dst is not None:
            out["dst"] = str(self.dst)
        if self.payload is not None:
            out["payload"] = self.payload
        return out


@dataclass
class Scripted:
    """Fully explicit per-message delays; `delta` is optional bookkeeping only
    (adversarial schedules carry no delivery bound)."""
    default: Fraction
    rules: tuple[ScriptRule, ...] = ()
    delta: Optional[Fraction] = None

    def __post_init__(self):
        self.default = Fraction(self.default)
        if self.default <= 0:
            raise ConfigError("default delay must be strictly positive")
        self.rules = tuple(self.rules)
        if self.delta is not None:
            self.delta = Fraction(self.delta)

    def delta_bound(self) -> Optional[Fraction]:
        return self.delta

    def delay_for(self, env: Envelope, t: Fraction, rng: random.Random, index: int) -> Fraction:
        for rule in self.rules:
            if rule.matches(env):
                return rule.delay
        return self.default

    def to_config(self) -> dict:
        out: dict = {"kind": "scripted", "default": fmt_fraction(self.default),
                     "rules": [r.to_config() for r in self.rules]}
        if self.delta is not None:
            out["delta"] = fmt_fraction(self.delta)
        return out


# -------------------------------------------------------------------- strategies

@dataclass
class StrategySpec:
    name: str
    params: dict = field(default_factory=dict)

    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.name}({inner})"


class StrategyContext:
    """What a Byzantine strategy may touch: its vault, its own key, the wire."""

    def __init__(self, sim: "_Sim", pid: ParticipantId):
        self._sim = sim
        self.pid = pid

    @property
    def now(self) -> Fraction:
        return self._sim.now

    @property
    def scenario(self) -> "Scenario":
        return self._sim.sc

    @property
    def pay(self) -> PaymentInstance:
        return self._sim.pay

    @property
    def vault(self) -> list[SignedMessage]:
        return self._sim.vaults[self.pid]

    def sign_own(self, payload: Payload) -> SignedMessage:
        return byzantine_emit(self._sim.strategies[self.pid], self.vault, payload, self.pid)

    def emit(self, dst: ParticipantId, payload: Payload,
             as_signer: Optional[ParticipantId] = None) -> None:
        msg = byzantine_emit(self._sim.strategies[self.pid], self.vault,
                             payload, as_signer or self.pid)
        self._sim.send(Envelope(self.pid, dst, msg), self.now)

    def replay(self, dst: ParticipantId, msg: SignedMessage) -> None:
        if msg not in self.vault:
            raise ForgeryRejected(f"{self.pid} never observed {msg.token()}")
        self._sim.send(Envelope(self.pid, dst, msg), self.now)


class Strategy:
    """Base Byzantine behaviour: run the compliant automaton but filter its sends.

    Subclasses flip `uses_automaton` off to discard the prescribed behaviour
    entirely, hook `on_start`/`on_delivery` for own traffic, or override
    `filter_send` to drop or postpone prescribed messages.
    """
    uses_automaton = True

    def __init__(self, pid: ParticipantId, key: SigningKey, params: dict):
        self.pid = pid
        self.key = key
        self.params = dict(params)

    def on_start(self, ctx: StrategyContext) -> None:
        pass

    def on_delivery(self, ctx: StrategyContext, env: Envelope) -> None:
        pass

    def filter_send(self, ctx: StrategyContext, env: Envelope) -> list[tuple[Envelope, Fraction]]:
        return [(env, ctx.now)]


class Silent(Strategy):
    """Sends nothing, ever; prescribed behaviour dropped wholesale."""
    uses_automaton = False


class DelayOwnSends(Strategy):
    """Behaves like the compliant automaton but posts every send `delay` late."""

    def __init__(self, pid, key, params):
        super().__init__(pid, key, params)
        self.delay = Fraction(params.get("delay", 1))
        if self.delay <= 0:
            raise ConfigError("delay_own_sends needs a positive delay")

    def filter_send(self, ctx, env):
        return [(env, ctx.now + self.delay)]


def _carries_certificate(payload: Payload) -> bool:
    return isinstance(payload, (Certificate, CommitReq))


class WithholdCertificate(Strategy):
    """Bob plays along but the certificate never leaves his hands."""

    def filter_send(self, ctx, env):
        if _carries_certificate(env.msg.payload):
            return []
        return [(env, ctx.now)]


class PrematureCertificate(Strategy):
    """Bob signs and ships the certificate at time zero, before any promise."""

    def on_start(self, ctx):
        pay = ctx.pay
        if ctx.scenario.variant == "weak":
            chi = ctx.sign_own(Certificate(pay.instance))
            ctx.emit(manager(), CommitReq(pay.instance, chi))
        else:
            ctx.emit(escrow(pay.n - 1), Certificate(pay.instance))

    def filter_send(self, ctx, env):
        # already issued; prescribed issue (or commit request) is suppressed
        if _carries_certificate(env.msg.payload):
            return []
        return [(env, ctx.now)]


class GreedyEscrow(Strategy):
    """Keeps every value it receives: promises go out, money and certificates never do."""

    def filter_send(self, ctx, env):
        if isinstance(env.msg.payload, Money) or _carries_certificate(env.msg.payload):
            return []
        return [(env, ctx.now)]


class Replayer(Strategy):
    """Echoes every message it observes to every other participant, once each."""
    uses_automaton = False

    def __init__(self, pid, key, params):
        super().__init__(pid, key, params)
        self._done: set[tuple] = set()

    def on_delivery(self, ctx, env):
        msg = env.msg
        key = (msg.signer, msg.nonce)
        if key in self._done:
            return
        self._done.add(key)
        for p in ctx.scenario.participant_ids():
            if p != self.pid:
                ctx.replay(p, msg)


class ImpatientAbort(Strategy):
    """Weak-variant customer that fires an abort request immediately but still
    follows the protocol afterwards (deposits, waits, converges)."""

    def on_start(self, ctx):
        ctx.emit(manager(), AbortReq(ctx.pay.instance))


def _role_customer_n(pid: ParticipantId, sc: "Scenario") -> bool:
    return pid == customer(sc.n)


def _role_escrow(pid: ParticipantId, sc: "Scenario") -> bool:
    return pid.kind is ParticipantKind.ESCROW


def _role_any(pid: ParticipantId, sc: "Scenario") -> bool:
    return pid.kind is not ParticipantKind.MANAGER


def _role_weak_customer(pid: ParticipantId, sc: "Scenario") -> bool:
    return pid.kind is ParticipantKind.CUSTOMER and sc.variant == "weak"


STRATEGIES: dict[str, tuple[type, Callable[[ParticipantId, "Scenario"], bool]]] = {
    "silent": (Silent, _role_any),
    "delay_own_sends": (DelayOwnSends, _role_any),
    "withhold_certificate": (WithholdCertificate, _role_customer_n),
    "premature_certificate": (PrematureCertificate, _role_customer_n),
    "greedy_escrow": (GreedyEscrow, _role_escrow),
    "replayer": (Replayer, _role_any),
    "impatient_abort": (ImpatientAbort, _role_weak_customer),
}


def byzantine_emit(
    strategy: Strategy,
    observed: Sequence[SignedMessage],
    attempt: Payload,
    as_signer: ParticipantId,
) -> SignedMessage:
    """Construct a message a Byzantine participant may legitimately put on the wire.

    Succeeds iff `as_signer` is the strategy's own identity (fresh signature)
    or an identical signed payload exists in its vault (verbatim replay).
    """
    if as_signer == strategy.pid:
        return sign(attempt, as_signer, strategy.key)
    for msg in observed:
        if msg.signer == as_signer and msg.payload == attempt:
            return msg
    raise ForgeryRejected(f"{strategy.pid} cannot emit {attempt.token()} as {as_signer}")


# ---------------------------------------------------------------------- scenario

_TIE_BREAKS = ("receive_first", "timeout_first")
_RX_ORDERS = ("declared", "reversed")
_CLOCK_MODES = ("auto", "identity", "seeded", "worst_case", "escrows_slow", "all_fast", "all_slow")


@dataclass
class Scenario:
    """Everything one run depends on. Equal scenarios produce identical traces."""
    variant: str
    n: int
    delay: object  # Synchronous | PartialSync | Scripted (duck-typed delay model)
    pi: Fraction
    amount: int = 1
    rho: Fraction = Fraction(0)
    epsilon: Optional[Fraction] = None
    timing: Optional[TimingParams] = None
    mu: Fraction = Fraction(0)
    byzantine: dict[ParticipantId, StrategySpec] = field(default_factory=dict)
    patience: Optional[tuple] = None
    seed: int = 0
    horizon: Optional[Fraction] = None
    tie_break: str = "receive_first"
    rx_order: str = "declared"
    clock_mode: str = "auto"
    instance: str = "pay0"
    initial_balances: Optional[dict[ParticipantId, int]] = None
    patience_sufficient: Optional[bool] = None
    raw_injections: tuple = ()  # ((t, Envelope), ...) test hook; bypasses emission checks

    def __post_init__(self):
        self.pi = Fraction(self.pi)
        self.rho = Fraction(self.rho)
        self.mu = Fraction(self.mu)
        if self.epsilon is not None:
            self.epsilon = Fraction(self.epsilon)
        if self.horizon is not None:
            self.horizon = Fraction(self.horizon)
        if self.patience is not None:
            self.patience = tuple(None if p is None else Fraction(p) for p in self.patience)

    def validate(self) -> None:
        if self.variant not in ("strong", "weak"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.amount < 1:
            raise ConfigError("amount must be at least 1")
        if self.pi < 0 or self.rho < 0 or self.mu < 0:
            raise ConfigError("pi, rho, mu must be non-negative")
        if self.tie_break not in _TIE_BREAKS:
            raise ConfigError(f"tie_break must be one of {_TIE_BREAKS}")
        if self.rx_order not in _RX_ORDERS:
            raise ConfigError(f"rx_order must be one of {_RX_ORDERS}")
        if self.clock_mode not in _CLOCK_MODES:
            raise ConfigError(f"clock_mode must be one of {_CLOCK_MODES}")
        if self.variant == "strong" and self.patience is not None:
            raise ConfigError("patience applies to the weak variant only")
        if self.patience is not None and len(self.patience) != self.n + 1:
            raise ConfigError(f"need {self.n + 1} patience entries")
        if self.timing is not None and self.timing.n != self.n:
            raise ConfigError("explicit timing does not match n")
        if self.timing is None and self.delay.delta_bound() is None:
            raise ConfigError("cannot derive timeouts without a delivery bound; "
                              "give explicit timing")
        valid = set(map(str, self.participant_ids()))
        for pid, spec in self.byzantine.items():
            if pid.kind is ParticipantKind.MANAGER:
                raise ConfigError("the transaction manager is trusted and cannot be Byzantine")
            if str(pid) not in valid:
                raise ConfigError(f"byzantine participant {pid} not in the topology")
            entry = STRATEGIES.get(spec.name)
            if entry is None:
                raise ConfigError(f"unknown strategy {spec.name!r}")
            _, role_ok = entry
            if not role_ok(pid, self):
                raise ConfigError(f"strategy {spec.name!r} does not apply to {pid}")

    def participant_ids(self) -> list[ParticipantId]:
        out = [escrow(i) for i in range(self.n)]
        out += [customer(i) for i in range(self.n + 1)]
        if self.variant == "weak":
            out.append(manager())
        return out

    def resolved_timing(self) -> TimingParams:
        if self.timing is not None:
            return self.timing
        from .timing import derive_timeouts  # simnet is imported by timing; bind late
        return derive_timeouts(self.n, self.delay.delta_bound(), self.pi, self.rho,
                               epsilon=self.epsilon, margin=self.mu)

    def resolved_horizon(self, params: TimingParams) -> Fraction:
        if self.horizon is not None:
            return self.horizon
        from .timing import termination_bound
        return 4 * termination_bound(params)

    def resolved_patience(self) -> Optional[tuple]:
        if self.variant != "weak":
            return None
        return self.patience if self.patience is not None else tuple([None] * (self.n + 1))

    def resolved_balances(self) -> dict[ParticipantId, int]:
        # depositors front the payment amount; Bob, escrows and the manager start empty
        balances = {p: 0 for p in self.participant_ids()}
        for i in range(self.n):
            balances[customer(i)] = self.amount
        if self.initial_balances:
            balances.update(self.initial_balances)
        return balances

    def is_compliant(self, pid: ParticipantId) -> bool:
        return pid not in self.byzantine

    def config_dict(self) -> dict:
        pat = None
        if self.patience is not None:
            pat = ["inf" if p is None else fmt_fraction(p) for p in self.patience]
        return {
            "variant": self.variant,
            "n": self.n,
            "amount": self.amount,
            "instance": self.instance,
            "delay_model": self.delay.to_config(),
            "pi": fmt_fraction(self.pi),
            "rho": fmt_fraction(self.rho),
            "epsilon": None if self.epsilon is None else fmt_fraction(self.epsilon),
            "mu": fmt_fraction(self.mu),
            "timing": None if self.timing is None else {
                "a": [fmt_fraction(x) for x in self.timing.a],
                "d": [fmt_fraction(x) for x in self.timing.d],
                "epsilon": fmt_fraction(self.timing.epsilon),
                "pi": fmt_fraction(self.timing.pi),
                "delta": fmt_fraction(self.timing.delta),
                "rho": fmt_fraction(self.timing.rho),
                "mu": fmt_fraction(self.timing.mu),
            },
            "byzantine": {str(p): self.byzantine[p].label()
                          for p in sorted(self.byzantine, key=lambda q: q.sort_key)},
            "patience": pat,
            "seed": self.seed,
            "horizon": None if self.horizon is None else fmt_fraction(self.horizon),
            "tie_break": self.tie_break,
            "rx_order": self.rx_order,
            "clock_mode": self.clock_mode,
        }

    def digest(self) -> str:
        blob = json.dumps(self.config_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _rate_grid(rho: Fraction, points: int = 9) -> list[Fraction]:
    lo = Fraction(1) / (1 + rho)
    hi = 1 + rho
    return [lo + (hi - lo) * k / (points - 1) for k in range(points)]


def assign_clocks(scenario: Scenario) -> dict[ParticipantId, LocalClock]:
    """Per-participant clocks, rates within [1/(1+rho), 1+rho], zero offsets.

    Modes: auto (identity when rho=0, else seeded), seeded (deterministic
    seed-derived rates), worst_case (escrows fastest, customers slowest: the
    adversarial assignment for premature timeouts), escrows_slow (the reverse,
    maximal real timeout windows), all_fast, all_slow, identity.
    """
    rho = scenario.rho
    mode = scenario.clock_mode
    if mode == "auto":
        mode = "identity" if rho == 0 else "seeded"
    participants = sorted(scenario.participant_ids(), key=lambda p: p.sort_key)
    lo = Fraction(1) / (1 + rho)
    hi = 1 + rho

    def fixed(escrow_rate: Fraction, customer_rate: Fraction) -> dict[ParticipantId, LocalClock]:
        out = {}
        for p in participants:
            if p.kind is ParticipantKind.ESCROW:
                out[p] = LocalClock(escrow_rate)
            elif p.kind is ParticipantKind.CUSTOMER:
                out[p] = LocalClock(customer_rate)
            else:
                out[p] = LocalClock(Fraction(1))
        return out

    if mode == "identity":
        return {p: LocalClock() for p in participants}
    if mode == "worst_case":
        return fixed(hi, lo)
    if mode == "escrows_slow":
        return fixed(lo, hi)
    if mode == "all_fast":
        return fixed(hi, hi)
    if mode == "all_slow":
        return fixed(lo, lo)
    rng = random.Random(f"{scenario.seed}:clocks")
    grid = _rate_grid(rho)
    return {p: LocalClock(grid[rng.randrange(len(grid))]) for p in participants}


# --------------------------------------------------------------------- the engine

@dataclass
class _Event:
    kind: str  # deliver | output_done | timeout | send_later
    env: Optional[Envelope] = None
    pid: Optional[ParticipantId] = None
    state: Optional[str] = None
    sent_at: Optional[Fraction] = None


class _Sim:
    def __init__(self, scenario: Scenario, strict: bool = False):
        scenario.validate()
        self.sc = scenario
        self.strict = strict
        self.params = scenario.resolved_timing()
        self.horizon = scenario.resolved_horizon(self.params)
        self.pay = PaymentInstance(scenario.instance, scenario.n, scenario.amount)
        self.rng = random.Random(f"{scenario.seed}:delays")
        self.clocks = assign_clocks(scenario)
        self.keys = {p: SigningKey(p) for p in scenario.participant_ids()}
        self.ledger = Ledger(scenario.resolved_balances())
        self.initial_balances = dict(self.ledger.balances)

        patience = scenario.resolved_patience()
        if scenario.variant == "weak":
            roster = make_weak_participants(self.params, self.pay, patience,
                                            clocks=self.clocks, keys=self.keys)
            tm = manager()
            roster[tm] = make_transaction_manager(scenario.n, self.pay,
                                                  clock=self.clocks[tm], key=self.keys[tm])
        else:
            roster = make_strong_participants(self.params, self.pay,
                                              clocks=self.clocks, keys=self.keys)

        self.strategies: dict[ParticipantId, Strategy] = {}
        self.vaults: dict[ParticipantId, list[SignedMessage]] = {}
        for pid, spec in scenario.byzantine.items():
            cls, _ = STRATEGIES[spec.name]
            strategy = cls(pid, self.keys[pid], spec.params)
            self.strategies[pid] = strategy
            self.vaults[pid] = []
            if not strategy.uses_automaton:
                roster.pop(pid, None)
        self.automata: dict[ParticipantId, Automaton] = roster

        self.pending_compliant = sum(
            1 for pid in roster if scenario.is_compliant(pid) and not roster[pid].is_terminal()
        )
        self.compliant_total = sum(1 for pid in roster if scenario.is_compliant(pid))

        self.heap: list[tuple[Fraction, int, _Event]] = []
        self.seq = 0
        self.now = Fraction(0)
        self.send_index = 0
        self.entries: list[TraceEntry] = []
        self.had_tie = False
        self.stop_reason = STOP_QUEUE_EMPTY

    # -- bookkeeping ---------------------------------------------------------

    def schedule(self, t: Fraction, ev: _Event) -> None:
        # Deliveries sort before automaton steps at the same instant: a message
        # arriving exactly at a deadline must be in the inbox when the
        # scheduler applies its tie-break, and simultaneous arrivals must all
        # be visible before any of them can fire a transition.
        priority = 0 if ev.kind == "deliver" else 1
        heapq.heappush(self.heap, (t, priority, self.seq, ev))
        self.seq += 1

    def entry(self, rec: Rec, pid: ParticipantId, t: Fraction, **kw) -> TraceEntry:
        e = TraceEntry(t=t, seq=len(self.entries), participant=pid,
                       local=self.clocks[pid].local_time(t), rec=rec, **kw)
        self.entries.append(e)
        return e

    def ctx(self, pid: ParticipantId) -> StrategyContext:
        return StrategyContext(self, pid)

    # -- wire ------------------------------------------------------------------

    def send(self, env: Envelope, t: Fraction) -> bool:
        payload = env.msg.payload
        if isinstance(payload, Money):
            try:
                self.ledger.send_value(env.src, payload.amount)
            except InsufficientFunds:
                self.entry(Rec.IMPOSSIBLE_STEP, env.src, t, reason="insufficient_funds")
                aut = self.automata.get(env.src)
                if aut is not None and self.sc.is_compliant(env.src):
                    aut.stuck = True
                    if self.strict:
                        raise ConsistencyViolation(
                            f"{env.src} prescribed a transfer it cannot fund at t={t}")
                return False
            self.entry(Rec.TRANSFERRED, env.src, t, frm=env.src, to=env.dst,
                       amount=payload.amount, phase="sent")
        self.entry(Rec.SENT, env.src, t, env=env)
        delay = self.sc.delay.delay_for(env, t, self.rng, self.send_index)
        self.send_index += 1
        self.schedule(t + delay, _Event("deliver", env=env, sent_at=t))
        return True

    def _deliver(self, env: Envelope, t: Fraction, sent_at: Optional[Fraction]) -> Optional[ParticipantId]:
        """Deliver into the inbox; returns the recipient if its automaton may now fire.

        Firing is the caller's job: all deliveries at one instant land before
        any transition at that instant is taken.
        """
        pid = env.dst
        if not verify(env.msg, env.msg.signer):
            self.entry(Rec.REJECTED, pid, t, env=env, reason="bad_signature")
            return None
        self.entry(Rec.DELIVERED, pid, t, env=env,
                   delay=(t - sent_at) if sent_at is not None else Fraction(0))
        payload = env.msg.payload
        if isinstance(payload, Money):
            self.ledger.receive_value(pid, payload.amount)
            self.entry(Rec.TRANSFERRED, pid, t, frm=env.src, to=pid,
                       amount=payload.amount, phase="received")
        strategy = self.strategies.get(pid)
        if strategy is not None:
            self.vaults[pid].append(env.msg)
            strategy.on_delivery(self.ctx(pid), env)
        aut = self.automata.get(pid)
        if aut is not None and not aut.is_terminal() and not aut.stuck:
            aut.inbox.append(env)
            if aut.state.kind is StateKind.INPUT:
                return pid
        return None

    # -- automaton driving -------------------------------------------------------

    def _enter_state(self, pid: ParticipantId, t: Fraction) -> None:
        aut = self.automata[pid]
        st = aut.state
        self.entry(Rec.STATE_ENTERED, pid, t, state=st.name)
        if st.kind is StateKind.OUTPUT:
            self.schedule(t + self.sc.pi, _Event("output_done", pid=pid, state=st.name))
        elif st.kind is StateKind.TERMINAL:
            self.entry(Rec.TERMINAL_REACHED, pid, t, state=st.name, discarded=len(aut.inbox))
            if self.sc.is_compliant(pid):
                self.pending_compliant -= 1
        else:
            tr = aut.timeout_guard()
            if tr is not None:
                deadline = tr.guard.local_deadline(aut.clock_vars, aut.clock)
                if deadline is not None:
                    real = aut.clock.real_time_of_deadline(deadline)
                    if real > t:
                        self.schedule(real, _Event("timeout", pid=pid, state=st.name))

    def _ordered_candidates(self, aut: Automaton, t: Fraction):
        cands = aut.enabled_transitions(t)
        receives = [c for c in cands if not isinstance(c[0].guard, Timeout)]
        timeouts = [c for c in cands if isinstance(c[0].guard, Timeout)]
        if (receives and timeouts) or len(receives) > 1:
            self.had_tie = True
        if self.sc.rx_order == "reversed":
            receives.reverse()
        if self.sc.tie_break == "timeout_first":
            return timeouts + receives
        return receives + timeouts

    def _try_fire(self, pid: ParticipantId, t: Fraction) -> None:
        aut = self.automata[pid]
        while not aut.stuck and aut.state.kind is StateKind.INPUT:
            ordered = self._ordered_candidates(aut, t)
            if not ordered:
                return
            tr, env = ordered[0]
            if isinstance(tr.guard, Timeout):
                deadline = tr.guard.local_deadline(aut.clock_vars, aut.clock)
                self.entry(Rec.TIMEOUT_FIRED, pid, t, state=aut.current, deadline=deadline)
            emissions = aut.step(tr, t, env)
            self._route_emissions(pid, emissions, t)
            self._enter_state(pid, t)

    def _fire_output(self, pid: ParticipantId, state_name: str, t: Fraction) -> None:
        aut = self.automata.get(pid)
        if aut is None or aut.stuck or aut.current != state_name:
            return
        tr = aut.state.transitions[0]
        emissions = aut.step(tr, t, None)
        self._route_emissions(pid, emissions, t)
        self._enter_state(pid, t)
        if aut.state.kind is StateKind.INPUT:
            self._try_fire(pid, t)

    def _on_timeout(self, pid: ParticipantId, state_name: str, t: Fraction) -> None:
        aut = self.automata.get(pid)
        if aut is None or aut.stuck or aut.current != state_name:
            return
        if aut.state.kind is StateKind.INPUT:
            self._try_fire(pid, t)

    def _route_emissions(self, pid: ParticipantId, emissions: list[Envelope], t: Fraction) -> None:
        strategy = self.strategies.get(pid)
        for env in emissions:
            if strategy is not None:
                for env2, when in strategy.filter_send(self.ctx(pid), env):
                    if when <= t:
                        self.send(env2, t)
                    else:
                        self.schedule(when, _Event("send_later", env=env2))
            else:
                self.send(env, t)
                if self.automata[pid].stuck:
                    break

    # -- main loop ----------------------------------------------------------------

    def run(self) -> Trace:
        for pid in sorted(self.automata, key=lambda p: p.sort_key):
            self._enter_state(pid, Fraction(0))
        for pid in sorted(self.automata, key=lambda p: p.sort_key):
            aut = self.automata[pid]
            if not aut.stuck and aut.state.kind is StateKind.INPUT:
                self._try_fire(pid, Fraction(0))
        for pid in sorted(self.strategies, key=lambda p: p.sort_key):
            self.strategies[pid].on_start(self.ctx(pid))
        for at, env in self.sc.raw_injections:
            self.schedule(Fraction(at), _Event("deliver", env=env, sent_at=Fraction(at)))

        self.stop_reason = STOP_QUEUE_EMPTY
        while self.heap:
            if self.compliant_total > 0 and self.pending_compliant == 0:
                self.stop_reason = STOP_ALL_TERMINAL
                break
            t = self.heap[0][0]
            if t > self.horizon:
                self.stop_reason = STOP_HORIZON
                if self.strict:
                    raise HorizonExceeded(f"event at t={t} beyond horizon {self.horizon}")
                break
            self.now = t
            if self.heap[0][1] == 0:
                # drain every delivery at this instant, then let recipients fire
                touched: dict[ParticipantId, None] = {}
                while self.heap and self.heap[0][0] == t and self.heap[0][1] == 0:
                    _, _, _, ev = heapq.heappop(self.heap)
                    pid = self._deliver(ev.env, t, ev.sent_at)
                    if pid is not None:
                        touched[pid] = None
                for pid in touched:
                    aut = self.automata.get(pid)
                    if aut is not None and not aut.stuck and aut.state.kind is StateKind.INPUT:
                        self._try_fire(pid, t)
                continue
            _, _, _, ev = heapq.heappop(self.heap)
            if ev.kind == "output_done":
                self._fire_output(ev.pid, ev.state, t)
            elif ev.kind == "timeout":
                self._on_timeout(ev.pid, ev.state, t)
            else:
                self.send(ev.env, t)
        else:
            if self.compliant_total > 0 and self.pending_compliant == 0:
                self.stop_reason = STOP_ALL_TERMINAL

        patience = self.sc.resolved_patience()
        sufficient = self.sc.patience_sufficient
        if sufficient is None:
            sufficient = patience is None or all(p is None for p in patience)
        meta = TraceMeta(
            variant=self.sc.variant,
            n=self.sc.n,
            amount=self.sc.amount,
            instance=self.sc.instance,
            seed=self.sc.seed,
            digest=self.sc.digest(),
            byzantine={p: s.label() for p, s in self.sc.byzantine.items()},
            compliant=frozenset(p for p in self.sc.participant_ids()
                                if self.sc.is_compliant(p)),
            params=self.params,
            horizon=self.horizon,
            delta=self.sc.delay.delta_bound(),
            tie_break=self.sc.tie_break,
            rx_order=self.sc.rx_order,
            initial_balances=self.initial_balances,
            clock_rates={p: self.clocks[p].rate for p in self.clocks},
            patience=patience,
            patience_sufficient=sufficient,
        )
        return Trace(meta=meta, entries=self.entries, stop_reason=self.stop_reason,
                     final_balances=dict(self.ledger.balances),
                     final_in_flight=self.ledger.in_flight, had_tie=self.had_tie)


def run_simulation(scenario: Scenario, strict: bool = False) -> Trace:
    """Execute one scenario to completion and return its trace.

    Pure function of the scenario: identical inputs give byte-identical traces.
    With strict=True, impossible prescribed steps raise ConsistencyViolation and
    a horizon cut raises HorizonExceeded; by default both are recorded in the
    trace so the property checkers can pass verdicts on what actually happened.
    """
    return _Sim(scenario, strict=strict).run()
