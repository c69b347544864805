from __future__ import annotations

import base64
import time
import uuid

import pytest

from mdmchain.client import GatewayError
from mdmchain.crypto import Account, sha256_hex
from mdmchain.gateway import sign_request
from mdmchain.ledger import Transaction
from mdmchain.registries import Right, make_ddo

from helpers import CONTENT, http_lifecycle

OWNER, PROVIDER, ENDUSER = (Account.from_seed(s) for s in ("owner", "provider", "enduser"))


@pytest.fixture
def lifecycle(client):
    return http_lifecycle(client, OWNER, PROVIDER, ENDUSER)


def test_health_and_tip(client):
    assert client.get("/health")["operator"] == PROVIDER.address
    tip = client.get("/chain/tip")
    assert tip["tip"] == 0 and tip["tx_count"] == 0


def test_full_flow(client, lifecycle):
    assert lifecycle["report"]["outcome"] == "accept"
    assert lifecycle["data"] == CONTENT
    assert sha256_hex(lifecycle["data"]) == lifecycle["cert"]["content_hash"]
    assert client.access_log("clip-1") == [lifecycle["grant"]["cert_id"]]
    note = lifecycle["grant"]["delivery"]
    assert note["channel"] == "http-response" and note["copy"].startswith("store://")
    copy = client._request("GET", "/blobs/" + note["copy"][len("store://"):]).content
    assert copy.decode() == lifecycle["grant"]["token"]


def test_resolve_and_404(client):
    client.register_did(OWNER)
    assert client.get(f"/dids/{OWNER.did}")["tip"] >= 1
    with pytest.raises(GatewayError) as e:
        client.resolve_did("did:mdm:nobody")
    assert e.value.status == 404 and e.value.code == "not-found" and "tip" in e.value.body


def test_revert_maps_to_409(client):
    client.register_did(OWNER)
    with pytest.raises(GatewayError) as e:
        client.register_did(OWNER)
    assert e.value.status == 409 and e.value.code == "already-registered"
    assert e.value.body["height"] >= 1 and e.value.body["tx_hash"]
    client.register_did(PROVIDER)  # nonce cache still in step after a revert


def test_wrong_endpoint_and_path_mismatch(client):
    tx = Transaction.create(OWNER, "did", "revoke", {"did": OWNER.did}, 1)
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/agreements", json={"tx": tx.to_dict()})
    assert e.value.code == "wrong-endpoint"
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/dids/did:mdm:other/revocation", json={"tx": tx.to_dict()})
    assert e.value.code == "path-mismatch"
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/dids", json={"tx": {"sender": "x"}})
    assert e.value.code == "bad-transaction"
    r = client._request("POST", "/dids", content=b"not json")
    assert r.status_code == 400


def test_generic_transaction_endpoint(client):
    args = {"bound_account": OWNER.address, "did": OWNER.did, "ddo": make_ddo(OWNER.did, OWNER.public_key)}
    tx = Transaction.create(OWNER, "did", "register", args, 1)
    pending = client.submit_tx(tx.to_dict(), wait=False)
    assert pending["status"] == "pending"
    for _ in range(200):
        try:
            receipt = client.get(f"/transactions/{tx.hash}")
            break
        except GatewayError:
            time.sleep(0.01)
    assert receipt["status"] == "success"
    with pytest.raises(GatewayError) as e:
        client.submit_tx(tx.to_dict())
    assert e.value.code == "stale-nonce"


def test_chain_blocks(client):
    client.register_did(OWNER)
    block = client.get("/chain/blocks/1")
    assert block["height"] == 1 and len(block["transactions"]) == 1
    with pytest.raises(GatewayError) as e:
        client.get("/chain/blocks/99")
    assert e.value.status == 404


def test_content_hash_mismatch(client):
    client.register_did(OWNER)
    tx = Transaction.create(OWNER, "multimedia", "register", {"id": "x"}, client.next_nonce(OWNER.address))
    body = {"tx": {**tx.to_dict(), "payload": '{"content_hash":"' + "00" * 32 + '"}'},
            "content": base64.b64encode(b"abc").decode()}
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/multimedia", json=body)
    assert e.value.code == "content-hash-mismatch"


def test_verify_always_answers(client, lifecycle):
    for body in (b"", b"{}", b"[1]", b'{"token": 5}', b'{"token": "a.b.c"}'):
        r = client._request("POST", "/tokens/verify", content=body)
        assert r.status_code == 200
        assert r.json()["outcome"] == "reject" and r.json()["failed_step"] == 1


def test_redeem_errors(client, lifecycle, gateway):
    r = client._request("POST", "/content/redeem", json={"token": "junk"})
    assert r.status_code == 403 and r.json()["step"] == 1
    path = gateway.gateway.store.path(lifecycle["content_hash"])
    data = bytearray(path.read_bytes())
    data[0] ^= 0x01
    path.write_bytes(bytes(data))
    r = client._request("POST", "/content/redeem", json={"token": lifecycle["grant"]["token"]})
    assert r.status_code == 502 and r.json()["error"] == "content-integrity"
    path.unlink()
    r = client._request("POST", "/content/redeem", json={"token": lifecycle["grant"]["token"]})
    assert r.status_code == 404 and r.json()["error"] == "content-missing"


def test_policy_refusals(client, lifecycle):
    with pytest.raises(GatewayError) as e:
        client.request_access(ENDUSER, "clip-1", Right.BROADCASTING, 1000)
    assert e.value.status == 403 and e.value.code == "rights-not-licensed"
    with pytest.raises(GatewayError) as e:
        client.request_access(ENDUSER, "clip-1", Right.PERFORMANCE, 400 * 86400 * 1000)
    assert e.value.code == "duration-exceeds-agreement"


def test_access_request_auth(client, lifecycle):
    req = {"enduser_did": ENDUSER.did, "multimedia_id": "clip-1", "rights": ["performance"],
           "duration_ms": 1000, "nonce": uuid.uuid4().hex, "issued_at": time.time_ns() // 1_000_000}
    env = sign_request(ENDUSER, req)
    client._json("POST", "/access-requests", json=env)
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/access-requests", json=env)
    assert e.value.code == "replayed-request"
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/access-requests", json=sign_request(OWNER, {**req, "nonce": "n2"}))
    assert e.value.code == "not-enduser"
    forged = {**sign_request(ENDUSER, {**req, "nonce": "n3"}), "request": {**req, "nonce": "n4"}}
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/access-requests", json=forged)
    assert e.value.code == "bad-signature"
    with pytest.raises(GatewayError) as e:
        client._json("POST", "/access-requests", json=sign_request(ENDUSER, {**req, "nonce": "n5", "issued_at": 0}))
    assert e.value.code == "stale-request"


def test_deregistration_removes_blob(client, lifecycle, gateway):
    store = gateway.gateway.store
    assert store.exists(lifecycle["content_hash"])
    client.deregister(OWNER, "clip-1")
    assert not store.exists(lifecycle["content_hash"])
    with pytest.raises(GatewayError) as e:
        client.get_multimedia("clip-1")
    assert e.value.status == 404
    # certificate survives, redeem reports the missing content
    r = client._request("POST", "/content/redeem", json={"token": lifecycle["grant"]["token"]})
    assert r.status_code == 404 and r.json()["error"] == "content-missing"
