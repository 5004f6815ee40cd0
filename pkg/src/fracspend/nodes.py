"""Client and validator state machines for quorum-validated spending.

Control flow per operation:

* pay: the buyer authorizes a transaction and sends it to the seller.  The
  seller derives the candidate set, contacts every candidate with the
  transaction and a fresh nonce, and collects ring signatures relayed back
  until it can assemble a verifying proof, then confirms to the buyer.
  Validators self-select privately, refuse funds they have already vouched
  for or seen settled, and remember the one signature they gave per fund.
* settle: the buyer broadcasts the fund set to all validators.  Each
  validator shares its remembered signatures, waits until it has heard
  from n - f validators, reconstructs which transactions carry a valid
  quorum, and deterministically mints the remainder fund (or nothing when
  every fraction was spent).  The buyer accepts the value reported
  identically by n - f validators.
* redeem: the seller broadcasts its transactions with their proofs; each
  validator re-verifies the proofs alone, so earlier state loss on other
  validators cannot block payout.  One bad item invalidates the whole
  request.

Timeouts are modelled as event-queue quiescence: whatever is still pending
when no messages remain in flight is finalized as failed, presumed or
stalled, and never by waiting longer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .ledger import TracePay, TraceRedeem, TraceSettle
from .messages import (
    ConfirmPay,
    ConfirmRedeem,
    ConfirmSettle,
    ContactMsg,
    Fund,
    InvalidRedeem,
    PayMsg,
    RedeemMsg,
    SettleMsg,
    SettleRecord,
    SigResponse,
    Transaction,
    tx_auth_message,
)
from .quorum import ValidationProof, ValidationSession, make_ring_signature, validation_seed, verify_proof
from .rvrf import digest


class PreconditionError(Exception):
    """A locally-checkable operation precondition failed."""


def settle_fund_id(caller: str, funds: tuple[str, ...]) -> str:
    """Deterministic remainder-fund id every correct validator agrees on."""
    return "stl-" + digest(b"stl", caller.encode(), *(f.encode() for f in funds))[:8].hex()


def redeem_fund_id(caller: str, tx_ids: tuple[str, ...]) -> str:
    return "rdm-" + digest(b"rdm", caller.encode(), *(t.encode() for t in tx_ids))[:8].hex()


def majority_nonce(nonces: list[bytes]) -> bytes:
    """Most frequent nonce; ties break to the lowest byte order."""
    counts: dict[bytes, int] = {}
    for nonce in nonces:
        counts[nonce] = counts.get(nonce, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


@dataclass
class _SettleGather:
    funds: tuple[str, ...]
    caller: str | None = None
    op_id: str = ""
    senders: set = field(default_factory=set)
    records: list = field(default_factory=list)
    replied: bool = False


class ValidatorNode:
    """One validator: funds view, per-fund signature memory, settle/redeem."""

    def __init__(self, node_id: str, sim):
        self.node_id = node_id
        self.sim = sim
        self.keypair = sim.keys.keypair(node_id)
        self.funds: dict[str, Fund] = dict(sim.genesis_funds)
        self.seen: set[str] = set()
        self.settled: set[str] = set()
        self.redeemed: set[str] = set()
        # fund -> (tx, ring signature, nonce): the one validation given per fund
        self.signatures: dict[str, tuple[Transaction, object, bytes]] = {}
        self._gathers: dict[tuple[str, ...], _SettleGather] = {}
        self.corrupt_mode: str | None = None

    # dispatch

    def handle(self, src: str, msg, depth: int, op_id: str) -> None:
        if self.corrupt_mode == "silent":
            return
        if isinstance(msg, ContactMsg):
            self._on_contact(src, msg, depth, op_id)
        elif isinstance(msg, SettleMsg):
            self._on_settle(src, msg, depth, op_id)
        elif isinstance(msg, SettleRecord):
            self._on_settle_record(src, msg, depth, op_id)
        elif isinstance(msg, RedeemMsg):
            self._on_redeem(src, msg, depth, op_id)

    def on_quiescence(self) -> None:
        pass

    # validation

    def _valid(self, tx: Transaction) -> bool:
        fund = self.funds.get(tx.fund)
        return (
            fund is not None
            and tx.fund not in self.seen
            and tx.fund not in self.settled
            and tx.buyer in fund.owners
            and self.sim.keys.auth_verify(tx.buyer, tx_auth_message(tx.fund, tx.seller), tx.auth)
        )

    def _on_contact(self, src: str, msg: ContactMsg, depth: int, op_id: str) -> None:
        tx, nonce = msg.tx, msg.nonce
        d = tx.to_bytes()
        cands = self.sim.index.for_data(d)
        if self.keypair.pk not in cands.members:
            return
        out = self.sim.provider.eval(self.keypair.sk, validation_seed(d, nonce))
        if out > self.sim.threshold:
            return
        if self.corrupt_mode == "dup_sign":
            # signs anything it is selected for, several times over
            self.sim.note_signed(tx, self.node_id)
            for _ in range(3):
                sig = make_ring_signature(d, nonce, self.keypair, cands, self.sim.provider)
                self.sim.gossip(self.node_id, src, SigResponse(source=cands.source, sig=sig), op_id, depth)
            return
        if not self._valid(tx):
            return
        sig = make_ring_signature(d, nonce, self.keypair, cands, self.sim.provider)
        self.seen.add(tx.fund)
        self.signatures[tx.fund] = (tx, sig, nonce)
        self.sim.note_signed(tx, self.node_id)
        self.sim.gossip(self.node_id, src, SigResponse(source=cands.source, sig=sig), op_id, depth)

    # settlement

    def _gather_for(self, funds: tuple[str, ...]) -> _SettleGather:
        gather = self._gathers.get(funds)
        if gather is None:
            gather = _SettleGather(funds=funds)
            self._gathers[funds] = gather
        return gather

    def _on_settle(self, src: str, msg: SettleMsg, depth: int, op_id: str) -> None:
        gather = self._gather_for(msg.funds)
        if gather.caller is not None:
            return  # duplicate settle request for the same fund set
        gather.caller = src
        gather.op_id = op_id
        gather.senders.add(self.node_id)
        own = tuple(
            self.signatures[fid]
            for fid in msg.funds
            if fid in self.seen and fid not in self.settled and fid in self.signatures
        )
        gather.records.extend(own)
        record = SettleRecord(funds=msg.funds, records=own)
        for vid in self.sim.validator_ids:
            if vid != self.node_id:
                self.sim.send(self.node_id, vid, record, op_id, depth)
        self._maybe_close(gather, depth, op_id)

    def _on_settle_record(self, src: str, msg: SettleRecord, depth: int, op_id: str) -> None:
        gather = self._gather_for(msg.funds)
        if src in gather.senders:
            return
        gather.senders.add(src)
        gather.records.extend(msg.records)
        self._maybe_close(gather, depth, op_id)

    def _maybe_close(self, gather: _SettleGather, depth: int, op_id: str) -> None:
        cfg = self.sim.cfg
        if (
            gather.replied
            or gather.caller is None
            or len(gather.senders) < cfg.n - cfg.f
        ):
            return
        gather.replied = True
        caller = gather.caller
        # only funds that exist, are owned by the caller and are not yet
        # consumed contribute; the ownership guard stops settling on behalf
        # of others, the settled guard stops double counting
        effective = [
            fid for fid in gather.funds
            if (fund := self.funds.get(fid)) is not None
            and caller in fund.owners
            and fid not in self.settled
        ]
        eff_set = set(effective)
        groups: dict[bytes, dict] = {}
        for tx, sig, nonce in gather.records:
            if tx.fund not in eff_set:
                continue
            d = tx.to_bytes()
            group = groups.setdefault(d, {"tx": tx, "sigs": [], "payloads": set(), "nonces": []})
            if sig.payload not in group["payloads"]:
                group["payloads"].add(sig.payload)
                group["sigs"].append(sig)
            group["nonces"].append(nonce)
        spent = Fraction(0)
        for d, group in groups.items():
            nonce = majority_nonce(group["nonces"])
            proof = ValidationProof(signatures=tuple(group["sigs"]), nonce=nonce)
            cands = self.sim.index.for_data(d)
            if verify_proof(proof, d, cfg, self.sim.provider, cands):
                spent += self.funds[group["tx"].fund].balance / cfg.s2
        balance = sum((self.funds[fid].balance for fid in effective), Fraction(0)) - spent
        self.settled.update(eff_set)
        if balance > 0:
            fid = settle_fund_id(caller, gather.funds)
            self.funds[fid] = Fund(fid=fid, balance=balance, owners=frozenset({caller}))
            reply = ConfirmSettle(funds=gather.funds, new_fund=fid, balance=balance)
        else:
            reply = ConfirmSettle(funds=gather.funds, new_fund=None, balance=Fraction(0))
        self.sim.send(self.node_id, caller, reply, op_id, depth)

    # redemption

    def _on_redeem(self, src: str, msg: RedeemMsg, depth: int, op_id: str) -> None:
        if self.corrupt_mode == "redeem_liar":
            self.sim.send(self.node_id, src, InvalidRedeem(), op_id, depth)
            return
        cfg = self.sim.cfg
        total = Fraction(0)
        tx_ids: list[str] = []
        ok = bool(msg.items)
        for tx, proof in msg.items:
            fund = self.funds.get(tx.fund)
            d = tx.to_bytes()
            if (
                fund is None
                or tx.seller != src
                or tx.tx_id in self.redeemed
                or not verify_proof(proof, d, cfg, self.sim.provider, self.sim.index.for_data(d))
            ):
                ok = False
                break
            total += fund.balance / cfg.s2
            tx_ids.append(tx.tx_id)
        if not ok:
            # one bad item voids the whole request, state untouched
            self.sim.send(self.node_id, src, InvalidRedeem(), op_id, depth)
            return
        self.redeemed.update(tx_ids)
        fid = redeem_fund_id(src, tuple(tx_ids))
        self.funds[fid] = Fund(fid=fid, balance=total, owners=frozenset({src}))
        self.sim.send(self.node_id, src, ConfirmRedeem(new_fund=fid, balance=total), op_id, depth)


@dataclass
class _PendingPay:
    op_id: str
    tx: Transaction
    confirmed: bool = False


@dataclass
class _PendingSession:
    op_id: str
    tx: Transaction
    session: ValidationSession
    done: bool = False


@dataclass
class _PendingTally:
    op_id: str
    funds: tuple[str, ...]
    alias: str | None = None
    votes: dict = field(default_factory=dict)      # value -> set of senders
    invalid: set = field(default_factory=set)      # senders voting invalid
    done: bool = False


class ClientNode:
    """A buyer and/or seller; drives operations and tallies confirmations."""

    def __init__(self, node_id: str, sim):
        self.node_id = node_id
        self.sim = sim
        self.assets: dict[str, Fund] = {
            fid: fund for fid, fund in sim.genesis_funds.items() if node_id in fund.owners
        }
        self.aliases: dict[str, str] = {}
        self.sales: dict[str, tuple[Transaction, ValidationProof]] = {}
        self.pays: dict[str, _PendingPay] = {}
        self.sessions: dict[bytes, _PendingSession] = {}
        self.settles: dict[tuple[str, ...], _PendingTally] = {}
        self.redeem: _PendingTally | None = None
        self.redeem_items: tuple = ()
        self.corrupted = False

    # operations initiated by the workload driver

    def resolve(self, fund_ref: str) -> str:
        return self.aliases.get(fund_ref, fund_ref)

    def start_pay(self, op_id: str, fund_ref: str, seller: str) -> Transaction:
        fid = self.resolve(fund_ref)
        if fid not in self.assets:
            raise PreconditionError(f"{self.node_id} does not hold fund {fund_ref}")
        if not self.corrupted:
            # honest buyers respect the fractional-spending discipline: at
            # most s1 payments of a fund in flight, at most s2 ever started
            cfg = self.sim.cfg
            same_fund = [p for p in self.pays.values() if p.tx.fund == fid]
            if sum(1 for p in same_fund if not p.confirmed) >= cfg.s1:
                raise PreconditionError(f"{fid}: {cfg.s1} payments already in flight")
            if len(same_fund) >= cfg.s2:
                raise PreconditionError(f"{fid}: all {cfg.s2} fractions already committed")
        auth = self.sim.keys.auth_sign(self.node_id, tx_auth_message(fid, seller))
        tx = Transaction(fund=fid, seller=seller, buyer=self.node_id, auth=auth)
        self.pays[tx.tx_id] = _PendingPay(op_id=op_id, tx=tx)
        self.sim.trace.append(TracePay(fund=fid, buyer=self.node_id, seller=seller, accepted=False))
        self.sim.send(self.node_id, seller, PayMsg(tx=tx), op_id, 0)
        return tx

    def start_settle(self, op_id: str, fund_refs: tuple[str, ...], alias: str | None = None) -> None:
        fids = tuple(self.resolve(ref) for ref in fund_refs)
        for fid in fids:
            if fid not in self.assets:
                raise PreconditionError(f"{self.node_id} does not hold fund {fid}")
        tally = _PendingTally(op_id=op_id, funds=fids, alias=alias)
        self.settles[fids] = tally
        msg = SettleMsg(funds=fids)
        for vid in self.sim.validator_ids:
            self.sim.send(self.node_id, vid, msg, op_id, 0)

    def start_redeem(self, op_id: str, fund_refs: tuple[str, ...]) -> None:
        if self.redeem is not None and not self.redeem.done:
            raise PreconditionError(f"{self.node_id} already has a redeem in flight")
        fids = {self.resolve(ref) for ref in fund_refs}
        items = tuple(
            (tx, proof) for tx, proof in self.sales.values() if tx.fund in fids
        )
        if not items:
            raise PreconditionError(f"{self.node_id} holds no redeemable payment in {sorted(fids)}")
        self.redeem = _PendingTally(op_id=op_id, funds=tuple(sorted(fids)))
        self.redeem_items = items
        msg = RedeemMsg(items=items)
        for vid in self.sim.validator_ids:
            self.sim.send(self.node_id, vid, msg, op_id, 0)

    # message handling

    def handle(self, src: str, msg, depth: int, op_id: str) -> None:
        if isinstance(msg, PayMsg):
            self._on_pay(src, msg, depth, op_id)
        elif isinstance(msg, SigResponse):
            self._on_sig_response(msg, depth)
        elif isinstance(msg, ConfirmPay):
            self._on_confirm_pay(msg, depth)
        elif isinstance(msg, ConfirmSettle):
            self._on_confirm_settle(src, msg)
        elif isinstance(msg, ConfirmRedeem):
            self._on_confirm_redeem(src, msg)
        elif isinstance(msg, InvalidRedeem):
            self._on_invalid_redeem(src)

    def _on_pay(self, src: str, msg: PayMsg, depth: int, op_id: str) -> None:
        tx = msg.tx
        if tx.seller != self.node_id or tx.buyer != src:
            return
        if not self.sim.keys.auth_verify(tx.buyer, tx_auth_message(tx.fund, tx.seller), tx.auth):
            return
        d = tx.to_bytes()
        cands = self.sim.index.for_data(d)
        nonce = self.sim.nonce_for(self.node_id, tx)
        session = ValidationSession(
            d=d, nonce=nonce, cfg=self.sim.cfg, candidates=cands, provider=self.sim.provider
        )
        self.sessions[cands.source] = _PendingSession(op_id=op_id, tx=tx, session=session)
        contact = ContactMsg(tx=tx, nonce=nonce)
        for pk in cands.members:
            vid = self.sim.keys.node_for_pk(pk)
            self.sim.send(self.node_id, vid, contact, op_id, depth)

    def _on_sig_response(self, msg, depth: int) -> None:
        pending = self.sessions.get(msg.source)
        if pending is None or pending.done:
            return
        proof = pending.session.on_signature(msg.sig)
        if proof is not None:
            pending.done = True
            tx = pending.tx
            self.sales[tx.tx_id] = (tx, proof)
            self.sim.note_pay_path(pending.op_id, "seller", depth)
            self.sim.note_outcome(pending.op_id, "sale", "confirmed", tx.tx_id)
            self.sim.send(self.node_id, tx.buyer, ConfirmPay(tx_id=tx.tx_id), pending.op_id, depth)

    def _on_confirm_pay(self, msg: ConfirmPay, depth: int) -> None:
        pending = self.pays.get(msg.tx_id)
        if pending is None or pending.confirmed:
            return
        pending.confirmed = True
        self.sim.note_pay_path(pending.op_id, "buyer", depth)
        self.sim.note_outcome(pending.op_id, "pay", "confirmed", msg.tx_id)

    def _tally(self, tally: _PendingTally, sender: str, value) -> bool:
        voters = tally.votes.setdefault(value, set())
        voters.add(sender)
        return len(voters) >= self.sim.cfg.n - self.sim.cfg.f

    def _on_confirm_settle(self, src: str, msg: ConfirmSettle) -> None:
        tally = self.settles.get(msg.funds)
        if tally is None or tally.done:
            return
        value = (msg.new_fund, msg.balance)
        if not self._tally(tally, src, value):
            return
        tally.done = True
        fid, balance = value
        for settled_fid in msg.funds:
            self.assets.pop(settled_fid, None)
        if fid is not None:
            self.assets[fid] = Fund(fid=fid, balance=balance, owners=frozenset({self.node_id}))
            if tally.alias:
                self.aliases[tally.alias] = fid
            status = "settled"
        else:
            status = "exhausted"  # every fraction spent, nothing to mint
        self.sim.trace.append(
            TraceSettle(caller=self.node_id, funds=msg.funds,
                        minted=balance if fid else None, new_fund=fid)
        )
        self.sim.note_outcome(tally.op_id, "settle", status, fid or "")

    def _on_confirm_redeem(self, src: str, msg: ConfirmRedeem) -> None:
        tally = self.redeem
        if tally is None or tally.done:
            return
        value = (msg.new_fund, msg.balance)
        if not self._tally(tally, src, value):
            return
        tally.done = True
        fid, balance = value
        self.assets[fid] = Fund(fid=fid, balance=balance, owners=frozenset({self.node_id}))
        self.sim.trace.append(
            TraceRedeem(
                caller=self.node_id,
                funds=tuple(tx.fund for tx, _proof in self.redeem_items),
                minted=balance,
                new_fund=fid,
            )
        )
        self.sim.note_outcome(tally.op_id, "redeem", "redeemed", fid)

    def _on_invalid_redeem(self, src: str) -> None:
        tally = self.redeem
        if tally is None or tally.done:
            return
        tally.invalid.add(src)
        if len(tally.invalid) >= self.sim.cfg.f + 1:
            tally.done = True
            self.sim.trace.append(
                TraceRedeem(
                    caller=self.node_id,
                    funds=tuple(tx.fund for tx, _proof in self.redeem_items),
                    minted=None,
                )
            )
            self.sim.note_outcome(tally.op_id, "redeem", "error", "f+1 invalid replies")

    # timeout semantics

    def on_quiescence(self) -> None:
        for pending in self.sessions.values():
            if not pending.done:
                pending.done = True
                if pending.session.finish() is None:
                    self.sim.note_outcome(pending.op_id, "sale", "failed", pending.tx.tx_id)
        for pending in self.pays.values():
            if not pending.confirmed:
                pending.confirmed = True
                # no confirmation by quiescence: the buyer presumes success
                # and recovers any unspent fraction at settlement
                self.sim.note_outcome(pending.op_id, "pay", "presumed", pending.tx.tx_id)
        for tally in self.settles.values():
            if not tally.done:
                tally.done = True
                self.sim.trace.append(TraceSettle(caller=self.node_id, funds=tally.funds, minted=None))
                self.sim.note_outcome(tally.op_id, "settle", "stalled", "")
        if self.redeem is not None and not self.redeem.done:
            self.redeem.done = True
            self.sim.trace.append(
                TraceRedeem(
                    caller=self.node_id,
                    funds=tuple(tx.fund for tx, _proof in self.redeem_items),
                    minted=None,
                )
            )
            self.sim.note_outcome(self.redeem.op_id, "redeem", "stalled", "")
