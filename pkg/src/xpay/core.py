"""Participants, message vocabulary, capability-based signing, and the value ledger.

Signatures are simulated: a participant can produce a verifying message only
through its own SigningKey capability, or by relaying a previously observed
message verbatim. That is exactly the authentication power the threat model
grants, and it keeps runs deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

class AuthorizationError(Exception):
    """Attempt to sign with a key that does not belong to the claimed signer."""


class InsufficientFunds(Exception):
    """A transfer was requested that would drive a balance negative."""


class ConfigError(Exception):
    """A scenario or construction parameter is out of range or malformed."""


class ParticipantKind(Enum):
    ESCROW = "e"
    CUSTOMER = "c"
    MANAGER = "m"


_KIND_ORDER = {ParticipantKind.ESCROW: 0, ParticipantKind.CUSTOMER: 1, ParticipantKind.MANAGER: 2}


@dataclass(frozen=True)
class ParticipantId:
    kind: ParticipantKind
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ConfigError(f"participant index must be non-negative, got {self.index}")

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"

    @property
    def sort_key(self) -> tuple[int, int]:
        return (_KIND_ORDER[self.kind], self.index)


def escrow(i: int) -> ParticipantId:
    return ParticipantId(ParticipantKind.ESCROW, i)


def customer(i: int) -> ParticipantId:
    return ParticipantId(ParticipantKind.CUSTOMER, i)


def manager() -> ParticipantId:
    return ParticipantId(ParticipantKind.MANAGER, 0)


def parse_participant(token: str) -> ParticipantId:
    """Parse the compact form used in configs and trace lines, e.g. "e0", "c2", "m0"."""
    if len(token) < 2:
        raise ConfigError(f"bad participant token {token!r}")
    try:
        kind = ParticipantKind(token[0])
        index = int(token[1:])
    except ValueError as exc:
        raise ConfigError(f"bad participant token {token!r}") from exc
    return ParticipantId(kind, index)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raise TypeError(f"expected exact rational, got {type(value).__name__}")


def fmt_fraction(x: Fraction) -> str:
    """Render a rational as num/den, denominator always explicit (bit-exact trace fields)."""
    f = Fraction(x)
    return f"{f.numerator}/{f.denominator}"


# --------------------------------------------------------------------------- payloads

class Payload:
    """Base class for message bodies. All payloads are bound to a payment instance id."""

    instance: str

    def token(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Guarantee(Payload):
    """Escrow's resolve-within-d commitment to its upstream customer (local-time duration)."""
    instance: str
    resolve_within: Fraction

    def __post_init__(self):
        object.__setattr__(self, "resolve_within", _as_fraction(self.resolve_within))
        if self.resolve_within <= 0:
            raise ConfigError("guarantee duration must be strictly positive")

    def token(self) -> str:
        return f"G[{self.instance},d={fmt_fraction(self.resolve_within)}]"


@dataclass(frozen=True)
class Promise(Payload):
    """Escrow's pay-on-certificate-within-window promise to its downstream customer."""
    instance: str
    accept_within: Fraction

    def __post_init__(self):
        object.__setattr__(self, "accept_within", _as_fraction(self.accept_within))
        if self.accept_within <= 0:
            raise ConfigError("promise window must be strictly positive")

    def token(self) -> str:
        return f"P[{self.instance},a={fmt_fraction(self.accept_within)}]"


@dataclass(frozen=True)
class Money(Payload):
    instance: str
    amount: int

    def __post_init__(self):
        if not isinstance(self.amount, int) or self.amount <= 0:
            raise ConfigError("money amount must be a strictly positive integer")

    def token(self) -> str:
        return f"$[{self.instance},{self.amount}]"


@dataclass(frozen=True)
class Certificate(Payload):
    """Bob's attestation that the payment obligation has been met."""
    instance: str

    def token(self) -> str:
        return f"X[{self.instance}]"


@dataclass(frozen=True)
class AbortCert(Payload):
    instance: str

    def token(self) -> str:
        return f"XA[{self.instance}]"


@dataclass(frozen=True)
class CommitCert(Payload):
    instance: str

    def token(self) -> str:
        return f"XC[{self.instance}]"


@dataclass(frozen=True)
class LockNotice(Payload):
    """Escrow's notification that the deposit for hop `escrow_index` is held."""
    instance: str
    escrow_index: int

    def token(self) -> str:
        return f"LOCK[{self.instance},{self.escrow_index}]"


@dataclass(frozen=True)
class CommitReq(Payload):
    """Commit request carrying the payment certificate (weak variant)."""
    instance: str
    certificate: "SignedMessage"

    def token(self) -> str:
        return f"CREQ[{self.instance},{self.certificate.token()}]"


@dataclass(frozen=True)
class AbortReq(Payload):
    instance: str

    def token(self) -> str:
        return f"AREQ[{self.instance}]"


PAYLOAD_KINDS = {
    "guarantee": Guarantee,
    "promise": Promise,
    "money": Money,
    "certificate": Certificate,
    "abort_cert": AbortCert,
    "commit_cert": CommitCert,
    "lock_notice": LockNotice,
    "commit_req": CommitReq,
    "abort_req": AbortReq,
}


# --------------------------------------------------------------------------- signing

@dataclass(eq=False)
class SigningKey:
    """Capability to sign as `owner`. The simulator hands each participant only its own key.

    Carries the per-participant nonce counter so duplicate payloads stay
    distinguishable in traces.
    """
    owner: ParticipantId
    _nonce: int = field(default=0, repr=False)

    def next_nonce(self) -> int:
        n = self._nonce
        self._nonce += 1
        return n


# Private mint token: a Seal verifies only if it was struck by sign() below.
# Constructing Seal(...) by hand yields a dud, which is the point: unforgeability
# holds even against code that reaches for the dataclass directly.
_MINT = object()


@dataclass(frozen=True)
class Seal:
    """Binding of (issuer, payload, nonce) produced by sign(); survives verbatim relay."""
    issuer: ParticipantId
    payload: Payload
    nonce: int
    mint: object = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class SignedMessage:
    payload: Payload
    signer: ParticipantId
    nonce: int
    seal: Seal

    def token(self) -> str:
        return f"{self.payload.token()}@{self.signer}/{self.nonce}"


def sign(payload: Payload, signer: ParticipantId, key: SigningKey) -> SignedMessage:
    """Produce a message verifying as `signer`. Raises AuthorizationError on key mismatch."""
    if key.owner != signer:
        raise AuthorizationError(f"key of {key.owner} cannot sign as {signer}")
    nonce = key.next_nonce()
    return SignedMessage(payload, signer, nonce, Seal(signer, payload, nonce, _MINT))


def verify(msg: SignedMessage, claimed_signer: ParticipantId) -> bool:
    """True iff `msg` was produced by sign() with `claimed_signer`'s key (relays included)."""
    return (
        msg.seal.mint is _MINT
        and msg.signer == claimed_signer
        and msg.seal.issuer == claimed_signer
        and msg.seal.payload == msg.payload
        and msg.seal.nonce == msg.nonce
    )


@dataclass(frozen=True)
class Envelope:
    """A message in transit: network-level sender and recipient around the signed body.

    The transmitter (`src`) need not be the payload signer: certificates are
    relayed upstream verbatim and stay attributable to their issuer.
    """
    src: ParticipantId
    dst: ParticipantId
    msg: SignedMessage


# --------------------------------------------------------------------------- ledger

@dataclass
class Ledger:
    """Integer balances for a single fungible asset, plus the value currently in transit.

    Invariants: sum(balances) + in_flight is constant under every operation,
    and no operation ever leaves a negative balance.
    """
    balances: dict[ParticipantId, int]
    in_flight: int = 0

    def __post_init__(self):
        for p, b in self.balances.items():
            if b < 0:
                raise InsufficientFunds(f"initial balance of {p} is negative")
        if self.in_flight < 0:
            raise InsufficientFunds("in-flight value is negative")

    def balance(self, p: ParticipantId) -> int:
        return self.balances.get(p, 0)

    def total(self) -> int:
        return sum(self.balances.values()) + self.in_flight

    def transfer(self, frm: ParticipantId, to: ParticipantId, amount: int) -> "Ledger":
        """Atomic debit/credit; returns a new ledger, the original is untouched."""
        if amount <= 0:
            raise ConfigError("transfer amount must be strictly positive")
        if self.balance(frm) < amount:
            raise InsufficientFunds(f"{frm} holds {self.balance(frm)}, cannot transfer {amount}")
        balances = dict(self.balances)
        balances[frm] = self.balance(frm) - amount
        balances[to] = self.balance(to) + amount
        return Ledger(balances, self.in_flight)

    # In-place pair used by the event loop: value leaves the sender at Sent and
    # reaches the recipient at Delivered, spending the interim in `in_flight`.

    def send_value(self, frm: ParticipantId, amount: int) -> None:
        if amount <= 0:
            raise ConfigError("amount must be strictly positive")
        if self.balance(frm) < amount:
            raise InsufficientFunds(f"{frm} holds {self.balance(frm)}, cannot send {amount}")
        self.balances[frm] = self.balance(frm) - amount
        self.in_flight += amount

    def receive_value(self, to: ParticipantId, amount: int) -> None:
        if amount <= 0:
            raise ConfigError("amount must be strictly positive")
        if self.in_flight < amount:
            raise InsufficientFunds("receiving more than is in flight")
        self.in_flight -= amount
        self.balances[to] = self.balance(to) + amount
