"""Executable ledger oracle for fractional spending.

This module is the ground truth the protocol is measured against.  It
models funds as entries ``(balance, payments, redeemed)`` where
``payments`` counts accepted fractions per seller (monotone, this is the
spending budget) and ``redeemed`` counts how many of those each seller has
already collected.  It exposes:

* :func:`apply`: a pure transition function for pay / settle / redeem /
  read, with exact rational arithmetic (a fraction is ``balance / s2``);
* :func:`conformance_check`: an order-replay over an observed run trace
  asserting the safety clauses: per-fund accepted fractions never exceed
  ``s2``, settled balances never exceed the unspent remainder, redeemed
  balances never exceed fractions actually received, and total minted
  value never exceeds the circulating ceiling (genesis value plus value
  legitimately re-minted through registered settle and redeem outputs).

The arithmetic here is deliberately independent of the node
implementations; tests compare the two sides and any drift is a bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping


class SpecViolation(Exception):
    """An operation hit a precondition the ledger model forbids."""

    def __init__(self, clause: str, detail: str = ""):
        super().__init__(f"{clause}: {detail}" if detail else clause)
        self.clause = clause


class MalformedTrace(Exception):
    """A trace references state that cannot exist (bug in the producer)."""


@dataclass(frozen=True)
class FundEntry:
    balance: Fraction
    owners: frozenset[str]
    payments: Mapping[str, int]  # seller -> accepted fraction count, monotone
    # seller -> fractions already redeemed; kept separate from payments so
    # redemption never frees spending budget
    redeemed: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class SpecState:
    funds: Mapping[str, FundEntry]
    minted: Mapping[str, int]  # creator -> counter for fresh fund ids


def make_state(genesis: Mapping[str, tuple[int | Fraction, Iterable[str]]]) -> SpecState:
    """Build a state from {fund_id: (balance, owners)}."""
    funds = {}
    for fid, (balance, owners) in genesis.items():
        balance = Fraction(balance)
        if balance < 0:
            raise ValueError(f"negative genesis balance for {fid}")
        funds[fid] = FundEntry(balance=balance, owners=frozenset(owners), payments={})
    return SpecState(funds=dict(funds), minted={})


# Operations

@dataclass(frozen=True)
class Pay:
    buyer: str
    fund: str
    seller: str


@dataclass(frozen=True)
class Settle:
    caller: str
    funds: tuple[str, ...]


@dataclass(frozen=True)
class Redeem:
    caller: str
    funds: tuple[str, ...]


@dataclass(frozen=True)
class Read:
    caller: str
    fund: str


def _require_fund(state: SpecState, fid: str) -> FundEntry:
    entry = state.funds.get(fid)
    if entry is None:
        raise SpecViolation("unknown-fund", fid)
    return entry


def _fresh_id(state: SpecState, creator: str) -> tuple[str, dict[str, int]]:
    minted = dict(state.minted)
    counter = minted.get(creator, 0)
    minted[creator] = counter + 1
    return f"{creator}/{counter}", minted


def apply(state: SpecState, op, s2: int):
    """Pure transition: returns (new_state, response).

    Responses: pay -> bool accepted; settle/redeem -> (fund_id | None,
    balance); read -> (balance, payments view).  State is never mutated in
    place; rejected pays return the input state unchanged.
    """
    if s2 < 1:
        raise ValueError(f"s2 must be positive, got {s2}")

    if isinstance(op, Pay):
        entry = _require_fund(state, op.fund)
        if op.buyer not in entry.owners:
            raise SpecViolation("not-owner", f"{op.buyer} does not own {op.fund}")
        if sum(entry.payments.values()) < s2:
            payments = dict(entry.payments)
            payments[op.seller] = payments.get(op.seller, 0) + 1
            funds = dict(state.funds)
            funds[op.fund] = replace(entry, payments=payments)
            return SpecState(funds=funds, minted=state.minted), True
        return state, False

    if isinstance(op, Settle):
        if not op.funds:
            raise SpecViolation("empty-fund-set")
        entries = {}
        for fid in op.funds:
            entry = _require_fund(state, fid)
            if op.caller not in entry.owners:
                raise SpecViolation("not-owner", f"{op.caller} does not own {fid}")
            entries[fid] = entry
        balance = Fraction(0)
        for fid, entry in entries.items():
            spent = (entry.balance / s2) * sum(entry.payments.values())
            balance += entry.balance - spent
        if balance < 0:
            raise SpecViolation("overspent-state", "payments exceed fund capacity")
        funds = {fid: e for fid, e in state.funds.items() if fid not in entries}
        if balance == 0:
            return SpecState(funds=funds, minted=state.minted), (None, balance)
        new_id, minted = _fresh_id(state, op.caller)
        funds[new_id] = FundEntry(balance=balance, owners=frozenset({op.caller}), payments={})
        return SpecState(funds=funds, minted=minted), (new_id, balance)

    if isinstance(op, Redeem):
        if not op.funds:
            raise SpecViolation("empty-fund-set")
        balance = Fraction(0)
        funds = dict(state.funds)
        for fid in op.funds:
            entry = _require_fund(state, fid)
            count = entry.payments.get(op.caller, 0) - entry.redeemed.get(op.caller, 0)
            if count < 1:
                raise SpecViolation("no-payment-to-redeem", f"{op.caller} in {fid}")
            balance += (entry.balance / s2) * count
            redeemed = dict(entry.redeemed)
            redeemed[op.caller] = entry.payments[op.caller]
            funds[fid] = replace(entry, redeemed=redeemed)
        new_id, minted = _fresh_id(state, op.caller)
        funds[new_id] = FundEntry(balance=balance, owners=frozenset({op.caller}), payments={})
        return SpecState(funds=funds, minted=minted), (new_id, balance)

    if isinstance(op, Read):
        entry = _require_fund(state, op.fund)
        if op.caller in entry.owners:
            view = dict(entry.payments)
        else:
            view = {op.caller: entry.payments.get(op.caller, 0)}
        return state, (entry.balance, view)

    raise TypeError(f"unknown operation {op!r}")


# Trace conformance
#
# A trace is the outward behaviour of one simulated run: which pays were
# quorum-accepted, and what every settle and redeem minted.  The checker
# replays it against genesis using its own accounting.

@dataclass(frozen=True)
class TracePay:
    fund: str
    buyer: str
    seller: str
    accepted: bool


@dataclass(frozen=True)
class TraceSettle:
    caller: str
    funds: tuple[str, ...]
    minted: Fraction | None  # None when nothing was minted (all spent or stalled)
    new_fund: str | None = None  # id of the minted fund, for chained spending


@dataclass(frozen=True)
class TraceRedeem:
    caller: str
    funds: tuple[str, ...]  # one entry per redeemed payment
    minted: Fraction | None
    new_fund: str | None = None


@dataclass(frozen=True)
class Verdict:
    passed: bool
    clause: str | None = None
    detail: str = ""

    def __str__(self) -> str:
        return "PASS" if self.passed else f"FAIL {self.clause}: {self.detail}"


@dataclass
class _FundLedger:
    balance: Fraction
    accepted: dict = field(default_factory=dict)   # seller -> count
    redeemed: dict = field(default_factory=dict)   # seller -> count
    settled: bool = False


def conformance_check(trace: Iterable, genesis: Mapping[str, tuple[int | Fraction, Iterable[str]]], s2: int) -> Verdict:
    """Replay a run trace and check the four safety clauses in order.

    Mint events that name their ``new_fund`` register it in the replay
    book, so spending chains through settled or redeemed value stay
    checkable; the minted balance is then also added to the conservation
    ceiling, since that value may legitimately be minted again downstream.
    """
    if s2 < 1:
        raise MalformedTrace(f"s2 must be positive, got {s2}")
    book: dict[str, _FundLedger] = {
        fid: _FundLedger(balance=Fraction(balance)) for fid, (balance, _owners) in genesis.items()
    }
    total_minted = Fraction(0)
    ceiling = sum((b.balance for b in book.values()), Fraction(0))

    def register_mint(event, minted: Fraction) -> Fraction:
        nonlocal ceiling
        if event.new_fund is not None and minted > 0:
            if event.new_fund in book:
                raise MalformedTrace(f"minted fund id {event.new_fund} already exists")
            book[event.new_fund] = _FundLedger(balance=minted)
            ceiling += minted
        return minted

    for event in trace:
        if isinstance(event, TracePay):
            fund = book.get(event.fund)
            if fund is None:
                raise MalformedTrace(f"pay references unknown fund {event.fund}")
            if not event.accepted:
                continue
            fund.accepted[event.seller] = fund.accepted.get(event.seller, 0) + 1
            if sum(fund.accepted.values()) > s2:
                return Verdict(False, "accepted-cap",
                               f"fund {event.fund} accepted {sum(fund.accepted.values())} > s2={s2}")

        elif isinstance(event, TraceSettle):
            unspent = Fraction(0)
            for fid in event.funds:
                fund = book.get(fid)
                if fund is None:
                    raise MalformedTrace(f"settle references unknown fund {fid}")
                if not fund.settled:
                    unspent += fund.balance - (fund.balance / s2) * sum(fund.accepted.values())
                fund.settled = True
            minted = event.minted if event.minted is not None else Fraction(0)
            if minted > unspent:
                return Verdict(False, "settle-unspent",
                               f"settle by {event.caller} minted {minted} > unspent {unspent}")
            total_minted += register_mint(event, minted)

        elif isinstance(event, TraceRedeem):
            receivable = Fraction(0)
            for fid in event.funds:
                fund = book.get(fid)
                if fund is None:
                    raise MalformedTrace(f"redeem references unknown fund {fid}")
                have = fund.accepted.get(event.caller, 0)
                used = fund.redeemed.get(event.caller, 0)
                if used < have:
                    receivable += fund.balance / s2
                    fund.redeemed[event.caller] = used + 1
            minted = event.minted if event.minted is not None else Fraction(0)
            if minted > receivable:
                return Verdict(False, "redeem-received",
                               f"redeem by {event.caller} minted {minted} > receivable {receivable}")
            total_minted += register_mint(event, minted)

        else:
            raise MalformedTrace(f"unknown trace event {event!r}")

        if total_minted > ceiling:
            return Verdict(False, "conservation",
                           f"minted {total_minted} > value ceiling {ceiling}")

    return Verdict(True)
