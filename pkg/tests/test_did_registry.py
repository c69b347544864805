from __future__ import annotations

import json

import pytest

from mdmchain.errors import NotFound
from mdmchain.registries import make_ddo, parse_ddo, verify_with_ddo
from mdmchain.registries.did import is_did

EXAMPLE_DID = "did:example:123456789abcdefghi"
# W3C sample document (RSA key, repository service), well-formed JSON
EXAMPLE_DDO = json.dumps({
    "@context": "https://w3id.org/did/v1",
    "id": EXAMPLE_DID,
    "publicKey": [{
        "id": EXAMPLE_DID + "#keys-1",
        "type": "RsaVerificationKey2018",
        "controller": EXAMPLE_DID,
        "publicKeyPem": "-----BEGIN PUBLIC KEY...END PUBLIC KEY-----",
    }],
    "service": [{
        "id": EXAMPLE_DID + "#vcr",
        "type": "CredentialRepositoryService",
        "serviceEndpoint": "https://repository.example.com/service/8377464",
    }],
})


def test_is_did():
    assert is_did("did:mdm:abc")
    assert is_did(EXAMPLE_DID)
    for bad in ("did:mdm", "DID:mdm:x", "did::x", "mdm:x", "did:mdm:a b", 7):
        assert not is_did(bad)


def test_w3c_example_document_is_accepted(parties):
    parse_ddo(EXAMPLE_DDO, EXAMPLE_DID)
    r = parties.tx(parties.owner, "did", "register",
                   {"bound_account": parties.owner.address, "did": EXAMPLE_DID, "ddo": EXAMPLE_DDO})
    assert r.ok
    assert parties.ledger.query("did", "resolve", EXAMPLE_DID) == EXAMPLE_DDO


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("@context"),
    lambda d: d.update(id="did:example:other"),
    lambda d: d.update(publicKey=[]),
    lambda d: d["publicKey"][0].update(id="did:example:other#k"),
    lambda d: d["publicKey"][0].pop("publicKeyPem"),
    lambda d: d["service"][0].pop("serviceEndpoint"),
    lambda d: d["service"][0].update(id="vcr"),
])
def test_malformed_documents(parties, mutate):
    doc = json.loads(EXAMPLE_DDO)
    mutate(doc)
    with pytest.raises(ValueError):
        parse_ddo(json.dumps(doc), EXAMPLE_DID)
    r = parties.tx(parties.owner, "did", "register",
                   {"bound_account": parties.owner.address, "did": EXAMPLE_DID, "ddo": json.dumps(doc)})
    assert r.reason == "malformed-ddo"


def test_make_ddo_verifies(parties):
    acct = parties.owner
    ddo = make_ddo(acct.did, acct.public_key, "https://owner.example/inbox")
    doc = parse_ddo(ddo, acct.did)
    assert doc["service"][0]["serviceEndpoint"] == "https://owner.example/inbox"
    assert verify_with_ddo(ddo, b"m", acct.sign(b"m"))
    assert not verify_with_ddo(ddo, b"m", parties.provider.sign(b"m"))
    assert not verify_with_ddo(EXAMPLE_DDO, b"m", acct.sign(b"m"))  # no Ed25519 key listed


def test_register_resolve_update_revoke(parties):
    led, owner = parties.ledger, parties.owner
    assert parties.register_did(owner).ok
    rec = led.query("did", "record", owner.did)
    assert rec["owner"] == owner.address and rec["bound_account"] == owner.address
    new = make_ddo(owner.did, owner.public_key, "https://moved.example")
    parties.ok(owner, "did", "update_ddo", {"did": owner.did, "ddo": new})
    assert led.query("did", "resolve", owner.did) == new
    parties.ok(owner, "did", "revoke", {"did": owner.did})
    with pytest.raises(NotFound) as e:
        led.query("did", "resolve", owner.did)
    assert e.value.code == "revoked"
    assert not led.query("did", "exists", owner.did)
    with pytest.raises(NotFound) as e:
        led.query("did", "resolve", "did:mdm:nobody")
    assert e.value.code == "not-found"


def test_one_shot_registration(parties):
    owner = parties.owner
    assert parties.register_did(owner).ok
    assert parties.register_did(owner).reason == "already-registered"
    assert parties.register_did(parties.provider, owner.did).reason == "already-registered"
    parties.ok(owner, "did", "revoke", {"did": owner.did})
    assert parties.register_did(owner).reason == "already-registered"
    assert parties.tx(owner, "did", "revoke", {"did": owner.did}).reason == "revoked"
    r = parties.tx(owner, "did", "update_ddo", {"did": owner.did, "ddo": make_ddo(owner.did, owner.public_key)})
    assert r.reason == "revoked"


def test_only_owner_may_update_or_revoke(parties):
    owner, other = parties.owner, parties.provider
    assert parties.register_did(owner).ok
    root = parties.ledger.state_root()
    r = parties.tx(other, "did", "update_ddo", {"did": owner.did, "ddo": make_ddo(owner.did, other.public_key)})
    assert r.reason == "not-owner"
    assert parties.tx(other, "did", "revoke", {"did": owner.did}).reason == "not-owner"
    assert parties.ledger.state_root() == root


def test_bad_args_revert(parties):
    r = parties.tx(parties.owner, "did", "register", {"did": parties.owner.did})
    assert r.reason == "bad-args"
    r = parties.tx(parties.owner, "did", "nope", {})
    assert r.reason == "unknown-operation"
