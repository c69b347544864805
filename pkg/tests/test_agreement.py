from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from mdmchain.registries import ALL_RIGHTS, Right

from helpers import AGREEMENT_HASH


def test_rights_bit_order():
    assert [r.value for r in (Right.PUBLICATION, Right.REVISION, Right.REPRODUCTION,
                              Right.EXHIBITION, Right.PERFORMANCE, Right.BROADCASTING)] == [1, 2, 4, 8, 16, 32]
    assert ALL_RIGHTS.value == 63


@given(st.integers(min_value=0, max_value=63))
def test_rights_round_trip(bits):
    r = Right(bits)
    assert Right.parse(r.text()) == r
    assert Right.parse(r.names) == r
    assert r.text() == ",".join(sorted(r.text().split(","))) if bits else r.text() == ""


def test_rights_parse_rejects_unknown():
    with pytest.raises(ValueError):
        Right.parse("publication,streaming")


def test_generate_and_settle(parties):
    parties.register_dids()
    parties.settle("ag-1")
    ag = parties.ledger.query("agreement", "get", "ag-1")
    assert ag["settled"] and ag["owner_signed"] and ag["provider_signed"]
    assert ag["provider_account"] == parties.provider.address
    assert [a["id"] for a in parties.ledger.query("agreement", "settled_by_hash", AGREEMENT_HASH)] == ["ag-1"]


def test_settled_agreement_is_immutable(parties):
    parties.register_dids()
    parties.settle("ag-1")
    p = parties
    assert p.tx(p.provider, "agreement", "generate", p.agreement_args("ag-1")).reason == "already-settled"
    assert p.tx(p.owner, "agreement", "owner_sign", p.sign_args("ag-1", p.owner)).reason == "already-settled"
    assert p.tx(p.provider, "agreement", "provider_sign", p.sign_args("ag-1", p.provider)).reason == "already-settled"


def test_double_owner_sign(parties):
    p = parties
    p.register_dids()
    p.ok(p.provider, "agreement", "generate", p.agreement_args("ag-1"))
    p.ok(p.owner, "agreement", "owner_sign", p.sign_args("ag-1", p.owner))
    assert p.tx(p.owner, "agreement", "owner_sign", p.sign_args("ag-1", p.owner)).reason == "double-sign"
    assert not p.ledger.query("agreement", "get", "ag-1")["settled"]


def test_redraft_resets_signatures(parties):
    p = parties
    p.register_dids()
    p.ok(p.provider, "agreement", "generate", p.agreement_args("ag-1"))
    p.ok(p.owner, "agreement", "owner_sign", p.sign_args("ag-1", p.owner))
    p.ok(p.provider, "agreement", "generate", p.agreement_args("ag-1", valid_time=60))
    ag = p.ledger.query("agreement", "get", "ag-1")
    assert not ag["owner_signed"] and ag["valid_time"] == 60


def test_signature_must_cover_current_terms(parties):
    p = parties
    p.register_dids()
    p.ok(p.provider, "agreement", "generate", p.agreement_args("ag-1"))
    stale = p.sign_args("ag-1", p.owner)
    p.ok(p.provider, "agreement", "generate", p.agreement_args("ag-1", valid_time=60))
    assert p.tx(p.owner, "agreement", "owner_sign", stale).reason == "bad-signature"
    wrong_key = p.sign_args("ag-1", p.enduser)
    assert p.tx(p.owner, "agreement", "owner_sign", wrong_key).reason == "bad-signature"


@pytest.mark.parametrize("change, reason", [
    (lambda a, p: a.update(owner_did="did:mdm:nobody"), "unknown-did"),
    (lambda a, p: a.update(owner_account=p.enduser.address), "party-mismatch"),
    (lambda a, p: a.update(copyrights="publication,performance"), "bad-args"),
    (lambda a, p: a.update(copyrights=""), "bad-args"),
    (lambda a, p: a.update(agreement_hash="AB" * 32), "bad-args"),
])
def test_generate_validation(parties, change, reason):
    p = parties
    p.register_dids()
    args = p.agreement_args("ag-1")
    change(args, p)
    assert p.tx(p.provider, "agreement", "generate", args).reason == reason


def test_only_provider_generates(parties):
    p = parties
    p.register_dids()
    assert p.tx(p.owner, "agreement", "generate", p.agreement_args("ag-1")).reason == "not-provider"
    assert p.tx(p.owner, "agreement", "owner_sign", {"id": "nope", "sig": "00" * 64}).reason == "not-found"
