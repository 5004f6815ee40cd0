"""Wire message shapes and their observable sizes."""

from fractions import Fraction

import pytest

from fracspend.messages import (
    ConfirmPay,
    ConfirmRedeem,
    ConfirmSettle,
    ContactMsg,
    InvalidRedeem,
    PayMsg,
    RedeemMsg,
    SettleMsg,
    SettleRecord,
    SigResponse,
    Transaction,
    tx_auth_message,
    wire_size,
)
from fracspend.quorum import ValidationProof
from fracspend.rvrf import RingSignature


def make_tx(fund="g0", seller="seller0", buyer="buyer0"):
    return Transaction(fund=fund, seller=seller, buyer=buyer, auth=b"\x01" * 32)


def test_tx_id_is_stable_and_binds_fields():
    tx = make_tx()
    assert tx.tx_id == make_tx().tx_id
    assert len(tx.tx_id) == 24  # 12 bytes hex
    assert tx.tx_id != make_tx(seller="seller1").tx_id
    assert tx.tx_id != make_tx(fund="g1").tx_id


def test_auth_message_distinguishes_targets():
    assert tx_auth_message("g0", "a") != tx_auth_message("g0", "b")
    assert tx_auth_message("g0", "a") != tx_auth_message("g1", "a")


def test_contact_sizes_share_a_bucket():
    # contacts of one batch must be indistinguishable by size even when
    # participant name lengths differ a little
    sizes = {
        wire_size(ContactMsg(tx=make_tx(seller=s), nonce=b"\x00" * 32))
        for s in ("s0", "s1", "seller7", "x")
    }
    assert len(sizes) == 1
    assert next(iter(sizes)) % 64 == 0


def test_signature_responses_are_fixed_size():
    sig = RingSignature(payload=b"\x00" * 48)
    assert wire_size(SigResponse(source=b"\x00" * 32, sig=sig)) == 80


def test_redeem_size_scales_with_proof_weight():
    sig = RingSignature(payload=b"\x00" * 48)
    one = ValidationProof(signatures=(sig,) * 6, nonce=b"\x00" * 8)
    two = ValidationProof(signatures=(sig,) * 8, nonce=b"\x00" * 8)
    m1 = RedeemMsg(items=((make_tx(), one),))
    m2 = RedeemMsg(items=((make_tx(), one), (make_tx(fund="g1"), two)))
    assert wire_size(m1) == 48 + 96 + 48 * 6
    assert wire_size(m2) == 48 + (96 + 48 * 6) + (96 + 48 * 8)


def test_settle_sizes_scale_with_funds_and_records():
    assert wire_size(SettleMsg(funds=("a",))) == 48
    assert wire_size(SettleMsg(funds=("a", "b", "c"))) == 96
    sig = RingSignature(payload=b"\x00" * 48)
    rec = SettleRecord(funds=("a",), records=((make_tx(), sig, b"\x00" * 8),) * 2)
    assert wire_size(rec) == 24 + 24 + 176 * 2


def test_confirmation_sizes_are_constant():
    assert wire_size(ConfirmPay(tx_id="ab" * 12)) == 40
    assert wire_size(ConfirmSettle(funds=("a",), new_fund="b/0", balance=Fraction(1))) == 72
    assert wire_size(ConfirmRedeem(new_fund="s/0", balance=Fraction(5, 2))) == 48
    assert wire_size(InvalidRedeem()) == 48
    assert wire_size(PayMsg(tx=make_tx())) == 96 + 32


def test_wire_size_rejects_unknown_payloads():
    with pytest.raises(TypeError):
        wire_size(object())
