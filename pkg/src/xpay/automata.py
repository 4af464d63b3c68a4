"""Timed-automaton runtime: drifting local clocks, receive/timeout guards, output dwell.

Each participant is a state machine with three state kinds:

* output states do a bounded amount of local work and leave via a single
  unguarded transition that sends one or more messages;
* input states wait (possibly forever) until a receive guard matches a
  buffered, signature-verified message, or a timeout guard over the local
  clock becomes true, and then fire immediately;
* terminal states have no outgoing transitions.

All real and local times are exact rationals, so timeout boundaries are
decided exactly and runs are reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Union

from .core import (
    ConfigError,
    Envelope,
    Payload,
    ParticipantId,
    SignedMessage,
    SigningKey,
    sign,
    verify,
)


class ProtocolComplete(Exception):
    """Raised when asked to step an automaton that already reached a terminal state."""


@dataclass(frozen=True)
class LocalClock:
    """Affine local clock: local_time(t) = offset + rate * t, rate > 0.

    With rate 1 and offset 0 local time equals real time. Drift bounded by rho
    means rate lies in [1/(1+rho), 1+rho].
    """
    rate: Fraction = Fraction(1)
    offset: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "rate", Fraction(self.rate))
        object.__setattr__(self, "offset", Fraction(self.offset))
        if self.rate <= 0:
            raise ConfigError("clock rate must be strictly positive")

    def local_time(self, real_time: Fraction) -> Fraction:
        return self.offset + self.rate * Fraction(real_time)

    def real_time_of_deadline(self, local_deadline: Fraction) -> Fraction:
        """Unique real instant t with local_time(t) = local_deadline (exact inversion)."""
        return (Fraction(local_deadline) - self.offset) / self.rate


class StateKind(Enum):
    INPUT = "input"
    OUTPUT = "output"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class Receive:
    """Guard matching a buffered message from `sender` whose payload has the given shape.

    `signed_by` additionally requires the payload signature to verify for that
    participant (certificates are checked against their issuer, not the relay).
    `where` hooks in the rare checks a field-equality list cannot express.
    """
    sender: ParticipantId
    payload_type: type
    attrs: tuple[tuple[str, object], ...] = ()
    signed_by: Optional[ParticipantId] = None
    where: Optional[Callable[[Payload], bool]] = None

    def matches(self, env: Envelope) -> bool:
        if env.src != self.sender:
            return False
        payload = env.msg.payload
        if not isinstance(payload, self.payload_type):
            return False
        for name, want in self.attrs:
            if getattr(payload, name) != want:
                return False
        if self.signed_by is not None and not verify(env.msg, self.signed_by):
            return False
        if self.where is not None and not self.where(payload):
            return False
        return True


@dataclass(frozen=True)
class Timeout:
    """Guard of the form now >= var + delay over the local clock.

    var=None is the absolute form now >= delay measured from local time zero
    (used for patience deadlines that precede any transition).
    """
    delay: Fraction
    var: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "delay", Fraction(self.delay))

    def local_deadline(self, clock_vars: dict[str, Fraction], clock: LocalClock) -> Optional[Fraction]:
        if self.var is None:
            return clock.offset + self.delay
        base = clock_vars.get(self.var)
        if base is None:
            return None
        return base + self.delay


@dataclass(frozen=True)
class Fresh:
    """Emit spec: sign `payload` with the automaton's own key at send time."""
    payload: Payload


@dataclass(frozen=True)
class Forward:
    """Emit spec: relay the captured message stored under `slot` verbatim."""
    slot: str


EmitSpec = Union[Fresh, Forward]
Guard = Union[Receive, Timeout]


@dataclass(frozen=True)
class Transition:
    target: str
    guard: Optional[Guard] = None  # None only on the single send of an output state
    assign: tuple[str, ...] = ()   # clock variables set to `now` when the transition fires
    capture: Optional[str] = None  # slot for the consumed message, enabling later Forward
    emits: tuple[tuple[ParticipantId, EmitSpec], ...] = ()


@dataclass(frozen=True)
class State:
    name: str
    kind: StateKind
    transitions: tuple[Transition, ...] = ()


def validate_states(states: dict[str, State], initial: str) -> None:
    if initial not in states:
        raise ConfigError(f"initial state {initial!r} is not defined")
    for st in states.values():
        for tr in st.transitions:
            if tr.target not in states:
                raise ConfigError(f"state {st.name!r} targets undefined state {tr.target!r}")
        if st.kind is StateKind.OUTPUT:
            if len(st.transitions) != 1 or st.transitions[0].guard is not None:
                raise ConfigError(f"output state {st.name!r} needs exactly one unguarded send")
        elif st.kind is StateKind.INPUT:
            if not st.transitions or any(tr.guard is None for tr in st.transitions):
                raise ConfigError(f"input state {st.name!r} needs guarded transitions only")
            if sum(isinstance(tr.guard, Timeout) for tr in st.transitions) > 1:
                raise ConfigError(f"input state {st.name!r} has more than one timeout guard")
        else:
            if st.transitions:
                raise ConfigError(f"terminal state {st.name!r} must have no transitions")


Enabled = tuple[Transition, Optional[Envelope]]


@dataclass
class Automaton:
    """One participant's state machine plus its runtime baggage (clock, key, inbox)."""
    id: ParticipantId
    states: dict[str, State]
    initial: str
    clock: LocalClock = field(default_factory=LocalClock)
    key: Optional[SigningKey] = None
    current: str = ""
    clock_vars: dict[str, Fraction] = field(default_factory=dict)
    captured: dict[str, SignedMessage] = field(default_factory=dict)
    inbox: list[Envelope] = field(default_factory=list)
    stuck: bool = False

    def __post_init__(self):
        validate_states(self.states, self.initial)
        if not self.current:
            self.current = self.initial
        if self.key is None:
            self.key = SigningKey(self.id)
        elif self.key.owner != self.id:
            raise ConfigError(f"automaton {self.id} was handed {self.key.owner}'s key")

    @property
    def state(self) -> State:
        return self.states[self.current]

    def is_terminal(self) -> bool:
        return self.state.kind is StateKind.TERMINAL

    def now(self, real_time: Fraction) -> Fraction:
        return self.clock.local_time(real_time)

    def timeout_guard(self) -> Optional[Transition]:
        for tr in self.state.transitions:
            if isinstance(tr.guard, Timeout):
                return tr
        return None

    def enabled_transitions(self, real_time: Fraction) -> list[Enabled]:
        """Enabled transitions of the current input state: receives matched against the
        buffered inbox (oldest matching message per guard), plus the timeout if due.

        Order: declaration order, receives carrying their matched envelope. The
        scheduler applies its tie-break policy on top of this list.
        """
        st = self.state
        if st.kind is not StateKind.INPUT:
            return []
        out: list[Enabled] = []
        for tr in st.transitions:
            if isinstance(tr.guard, Receive):
                for env in self.inbox:
                    if tr.guard.matches(env):
                        out.append((tr, env))
                        break
            else:
                deadline = tr.guard.local_deadline(self.clock_vars, self.clock)
                if deadline is not None and self.now(real_time) >= deadline:
                    out.append((tr, None))
        return out

    def step(
        self,
        transition: Transition,
        real_time: Fraction,
        matched: Optional[Envelope] = None,
    ) -> list[Envelope]:
        """Fire `transition`: apply clock assignments, consume the matched message,
        move to the target state, and return the envelopes to be sent.

        Fresh emissions are signed here with the automaton's own key; Forward
        emissions relay the captured message verbatim.
        """
        if self.state.kind is StateKind.TERMINAL:
            raise ProtocolComplete(f"{self.id} already terminal in {self.current!r}")
        now = self.now(real_time)
        for var in transition.assign:
            self.clock_vars[var] = now
        if matched is not None:
            self.inbox.remove(matched)
            if transition.capture:
                self.captured[transition.capture] = matched.msg
        emissions: list[Envelope] = []
        for recipient, spec in transition.emits:
            if isinstance(spec, Forward):
                msg = self.captured[spec.slot]
            else:
                msg = sign(spec.payload, self.id, self.key)
            emissions.append(Envelope(self.id, recipient, msg))
        self.current = transition.target
        return emissions
