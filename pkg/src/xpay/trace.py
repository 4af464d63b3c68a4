"""Run traces: the totally ordered event record a simulation produces.

Every entry carries the real timestamp, a sequence number breaking ties, the
acting participant and its local time. The text rendering is bit-exact and
documented in the README: fixed key order per event kind, rationals always as
num/den, newline-terminated lines, no trailing whitespace. Repeated runs of
the same scenario and seed produce byte-identical files.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from .core import Envelope, Money, ParticipantId, fmt_fraction


class Rec(Enum):
    SENT = "SENT"
    DELIVERED = "DELIVERED"
    REJECTED = "REJECTED"
    TIMEOUT_FIRED = "TIMEOUT_FIRED"
    STATE_ENTERED = "STATE_ENTERED"
    TRANSFERRED = "TRANSFERRED"
    TERMINAL_REACHED = "TERMINAL_REACHED"
    IMPOSSIBLE_STEP = "IMPOSSIBLE_STEP"


@dataclass
class TraceEntry:
    t: Fraction
    seq: int
    participant: ParticipantId
    local: Fraction
    rec: Rec
    env: Optional[Envelope] = None
    delay: Optional[Fraction] = None      # DELIVERED: transit time
    state: Optional[str] = None           # STATE_ENTERED / TIMEOUT_FIRED / TERMINAL_REACHED
    deadline: Optional[Fraction] = None   # TIMEOUT_FIRED: the local deadline that lapsed
    frm: Optional[ParticipantId] = None   # TRANSFERRED
    to: Optional[ParticipantId] = None
    amount: Optional[int] = None
    phase: Optional[str] = None           # TRANSFERRED: "sent" | "received"
    reason: Optional[str] = None          # REJECTED / IMPOSSIBLE_STEP
    discarded: int = 0                    # TERMINAL_REACHED: unconsumed inbox size

    def line(self) -> str:
        parts = [
            f"t={fmt_fraction(self.t)}",
            f"seq={self.seq}",
            f"p={self.participant}",
            f"lt={fmt_fraction(self.local)}",
            f"ev={self.rec.value}",
        ]
        if self.rec is Rec.SENT:
            parts.append(f"dst={self.env.dst}")
            parts.append(f"msg={self.env.msg.token()}")
        elif self.rec is Rec.DELIVERED:
            parts.append(f"src={self.env.src}")
            parts.append(f"msg={self.env.msg.token()}")
            parts.append(f"delay={fmt_fraction(self.delay)}")
        elif self.rec is Rec.REJECTED:
            parts.append(f"src={self.env.src}")
            parts.append(f"msg={self.env.msg.token()}")
            parts.append(f"reason={self.reason}")
        elif self.rec is Rec.TIMEOUT_FIRED:
            parts.append(f"state={self.state}")
            parts.append(f"deadline={fmt_fraction(self.deadline)}")
        elif self.rec is Rec.STATE_ENTERED:
            parts.append(f"state={self.state}")
        elif self.rec is Rec.TRANSFERRED:
            parts.append(f"from={self.frm}")
            parts.append(f"to={self.to}")
            parts.append(f"amount={self.amount}")
            parts.append(f"phase={self.phase}")
        elif self.rec is Rec.TERMINAL_REACHED:
            parts.append(f"state={self.state}")
            parts.append(f"discarded={self.discarded}")
        elif self.rec is Rec.IMPOSSIBLE_STEP:
            parts.append(f"reason={self.reason}")
        return " ".join(parts)


@dataclass
class TraceMeta:
    """Scenario facts the checkers need, frozen into the trace header."""
    variant: str
    n: int
    amount: int
    instance: str
    seed: int
    digest: str
    byzantine: dict[ParticipantId, str]
    compliant: frozenset[ParticipantId]
    params: object  # TimingParams
    horizon: Fraction
    delta: Optional[Fraction]
    tie_break: str
    rx_order: str
    initial_balances: dict[ParticipantId, int]
    clock_rates: dict[ParticipantId, Fraction]
    patience: Optional[tuple] = None
    patience_sufficient: bool = True


STOP_ALL_TERMINAL = "all_compliant_terminal"
STOP_QUEUE_EMPTY = "queue_empty"
STOP_HORIZON = "horizon_exceeded"


@dataclass
class Trace:
    meta: TraceMeta
    entries: list[TraceEntry] = field(default_factory=list)
    stop_reason: str = STOP_QUEUE_EMPTY
    final_balances: dict[ParticipantId, int] = field(default_factory=dict)
    final_in_flight: int = 0
    had_tie: bool = False  # some instant offered the scheduler a real choice

    def participants(self) -> list[ParticipantId]:
        return sorted(self.meta.initial_balances, key=lambda p: p.sort_key)

    def entries_for(self, p: ParticipantId) -> list[TraceEntry]:
        return [e for e in self.entries if e.participant == p]

    def net_change(self, p: ParticipantId, upto: Optional[int] = None) -> int:
        """Balance change of `p` over the entry prefix [0, upto] (whole trace if None)."""
        net = 0
        for idx, e in enumerate(self.entries):
            if upto is not None and idx > upto:
                break
            if e.rec is not Rec.TRANSFERRED:
                continue
            if e.phase == "sent" and e.frm == p:
                net -= e.amount
            elif e.phase == "received" and e.to == p:
                net += e.amount
        return net

    def terminal_entry(self, p: ParticipantId) -> Optional[tuple[int, TraceEntry]]:
        for idx, e in enumerate(self.entries):
            if e.rec is Rec.TERMINAL_REACHED and e.participant == p:
                return idx, e
        return None

    def header_lines(self) -> list[str]:
        m = self.meta
        lines = [
            "# xpay-trace v1",
            f"# scenario sha256={m.digest}",
            f"# run variant={m.variant} n={m.n} amount={m.amount} instance={m.instance} "
            f"seed={m.seed} horizon={fmt_fraction(m.horizon)} tie_break={m.tie_break} "
            f"rx_order={m.rx_order}",
        ]
        for p in self.participants():
            byz = m.byzantine.get(p, "-")
            lines.append(
                f"# participant p={p} clock={fmt_fraction(m.clock_rates[p])} "
                f"byz={byz} balance={m.initial_balances[p]}"
            )
        lines.append(f"# stop reason={self.stop_reason} entries={len(self.entries)}")
        return lines

    def lines(self) -> list[str]:
        return self.header_lines() + [e.line() for e in self.entries]

    def render(self) -> str:
        return "\n".join(self.lines()) + "\n"


def money_amount(env: Envelope) -> Optional[int]:
    if isinstance(env.msg.payload, Money):
        return env.msg.payload.amount
    return None
