"""Value types and wire messages exchanged by clients and validators.

Message payloads are plain frozen dataclasses.  ``wire_size`` gives each a
deterministic nominal byte size; the simulator exposes only (src, dst,
size) of correct-to-correct traffic to the adversary, so sizes are part of
the observation model.  Contact messages for one validation batch share
identical sizes by construction, which is what keeps selection unobservable
during the contact round.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .quorum import ValidationProof
from .rvrf import RingSignature, digest


@dataclass(frozen=True)
class Fund:
    fid: str
    balance: Fraction
    owners: frozenset[str]


@dataclass(frozen=True)
class Transaction:
    """One fractional payment: fund, payee, payer and payer's authorization."""

    fund: str
    seller: str
    buyer: str
    auth: bytes

    def to_bytes(self) -> bytes:
        return b"|".join((b"tx", self.fund.encode(), self.seller.encode(),
                          self.buyer.encode(), self.auth))

    @property
    def tx_id(self) -> str:
        return digest(b"txid", self.to_bytes())[:12].hex()


def tx_auth_message(fund: str, seller: str) -> bytes:
    """Bytes a buyer authorizes when paying ``seller`` from ``fund``."""
    return b"|".join((b"pay", fund.encode(), seller.encode()))


# Client <-> client

@dataclass(frozen=True)
class PayMsg:
    tx: Transaction


@dataclass(frozen=True)
class ConfirmPay:
    tx_id: str


# Validation round

@dataclass(frozen=True)
class ContactMsg:
    tx: Transaction
    nonce: bytes


@dataclass(frozen=True)
class SigResponse:
    source: bytes  # candidate-set source digest, routes back to the session
    sig: RingSignature


# Settlement

@dataclass(frozen=True)
class SettleMsg:
    funds: tuple[str, ...]


@dataclass(frozen=True)
class SettleRecord:
    funds: tuple[str, ...]
    records: tuple[tuple[Transaction, RingSignature, bytes], ...]


@dataclass(frozen=True)
class ConfirmSettle:
    funds: tuple[str, ...]
    new_fund: str | None
    balance: Fraction


# Redemption

@dataclass(frozen=True)
class RedeemMsg:
    items: tuple[tuple[Transaction, ValidationProof], ...]


@dataclass(frozen=True)
class ConfirmRedeem:
    new_fund: str
    balance: Fraction


@dataclass(frozen=True)
class InvalidRedeem:
    pass


def wire_size(msg) -> int:
    """Deterministic nominal wire size in bytes."""
    if isinstance(msg, PayMsg):
        return 96 + len(msg.tx.auth)
    if isinstance(msg, ConfirmPay):
        return 40
    if isinstance(msg, ContactMsg):
        # padded to a bucket so all contacts of a batch look alike
        raw = 48 + len(msg.tx.to_bytes())
        return raw + (-raw) % 64
    if isinstance(msg, SigResponse):
        return 32 + len(msg.sig.payload)
    if isinstance(msg, SettleMsg):
        return 24 + 24 * len(msg.funds)
    if isinstance(msg, SettleRecord):
        return 24 + 24 * len(msg.funds) + 176 * len(msg.records)
    if isinstance(msg, ConfirmSettle):
        return 72
    if isinstance(msg, RedeemMsg):
        total = 48
        for tx, proof in msg.items:
            total += 96 + 48 * len(proof.signatures)
        return total
    if isinstance(msg, (ConfirmRedeem, InvalidRedeem)):
        return 48
    raise TypeError(f"unknown message {msg!r}")
