"""HTTP client for the gateway. All signing happens here, with local keys."""

from __future__ import annotations

import base64
import threading
import time
import uuid
from typing import Any

import httpx

from .crypto import Account, sha256_hex
from .errors import MdmError
from .gateway import sign_request
from .ledger import Transaction
from .registries import Right, agreement_signing_payload, make_ddo
from .store import locator


class GatewayError(MdmError):
    def __init__(self, status: int, body: dict):
        super().__init__(body.get("error", f"http-{status}"), body.get("message", ""))
        self.status = status
        self.body = body

    def to_dict(self) -> dict:
        return {**self.body, "error": self.code, "status": self.status}


class GatewayClient:
    def __init__(self, url: str, timeout: float = 180.0) -> None:
        self.url = url.rstrip("/")
        self.http = httpx.Client(base_url=self.url, timeout=timeout)
        self._nonces: dict[str, int] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self.sent: list[dict] = []  # request bodies, kept for auditing what left the client
        self.keep_sent = False

    def close(self) -> None:
        self.http.close()

    def __enter__(self) -> "GatewayClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- transport

    def _request(self, method: str, path: str, **kw: Any) -> httpx.Response:
        if self.keep_sent and "json" in kw:
            self.sent.append(kw["json"])
        try:
            return self.http.request(method, path, **kw)
        except httpx.TransportError as exc:
            raise MdmError("gateway-unreachable", f"{self.url}: {exc}") from None

    def _json(self, method: str, path: str, **kw: Any) -> dict:
        r = self._request(method, path, **kw)
        try:
            body = r.json()
        except ValueError:
            body = {"error": f"http-{r.status_code}", "message": r.text[:200]}
        if r.status_code >= 400:
            raise GatewayError(r.status_code, body)
        return body

    def get(self, path: str) -> dict:
        return self._json("GET", path)

    # -- nonce-managed writes

    def _lock(self, address: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(address, threading.Lock())

    def next_nonce(self, address: str) -> int:
        return self.get(f"/accounts/{address}/nonce")["next_nonce"]

    def build_tx(self, account: Account, registry: str, op: str, args: dict, nonce: int) -> dict:
        return Transaction.create(account, registry, op, args, nonce).to_dict()

    def write(self, path: str, account: Account, registry: str, op: str, args: dict,
              extra: dict | None = None, method: str = "POST") -> dict:
        """Sign and send one transaction; raises GatewayError on revert or refusal."""
        addr = account.address
        with self._lock(addr):
            for attempt in (0, 1):
                nonce = self._nonces.get(addr) or self.next_nonce(addr)
                body = {"tx": self.build_tx(account, registry, op, args, nonce), **(extra or {})}
                try:
                    out = self._json(method, path, json=body)
                except GatewayError as exc:
                    if "tx_hash" in exc.body:  # sealed but reverted: nonce consumed
                        self._nonces[addr] = nonce + 1
                        raise
                    self._nonces.pop(addr, None)
                    if exc.code == "stale-nonce" and attempt == 0:
                        continue
                    raise
                self._nonces[addr] = nonce + 1
                return out
        raise AssertionError("unreachable")

    def submit_tx(self, tx: dict, wait: bool = True) -> dict:
        return self._json("POST", f"/transactions?wait={'true' if wait else 'false'}", json={"tx": tx})

    # -- DIDs

    def register_did(self, account: Account, did: str | None = None, ddo: str | None = None,
                     endpoint: str | None = None) -> dict:
        did = did or account.did
        ddo = ddo or make_ddo(did, account.public_key, endpoint)
        args = {"bound_account": account.address, "did": did, "ddo": ddo}
        return {**self.write("/dids", account, "did", "register", args), "did": did}

    def resolve_did(self, did: str) -> str:
        return self.get(f"/dids/{did}")["ddo"]

    def did_record(self, did: str) -> dict:
        return self.get(f"/dids/{did}/record")["record"]

    def update_ddo(self, account: Account, did: str, ddo: str) -> dict:
        return self.write(f"/dids/{did}", account, "did", "update_ddo", {"did": did, "ddo": ddo}, method="PUT")

    def revoke_did(self, account: Account, did: str) -> dict:
        return self.write(f"/dids/{did}/revocation", account, "did", "revoke", {"did": did})

    # -- agreements

    def generate_agreement(self, provider: Account, agreement_id: str, owner_did: str, owner_account: str,
                           provider_did: str, agreement_hash: str, valid_time: int,
                           copyrights: str | Right) -> dict:
        if isinstance(copyrights, Right):
            copyrights = copyrights.text()
        args = {
            "id": agreement_id, "owner_did": owner_did, "owner_account": owner_account,
            "provider_did": provider_did, "agreement_hash": agreement_hash,
            "valid_time": valid_time, "copyrights": copyrights,
        }
        return self.write("/agreements", provider, "agreement", "generate", args)

    def get_agreement(self, agreement_id: str) -> dict:
        return self.get(f"/agreements/{agreement_id}")["agreement"]

    def sign_agreement(self, account: Account, agreement_id: str, party: str) -> dict:
        if party not in ("owner", "provider"):
            raise ValueError("party must be 'owner' or 'provider'")
        ag = self.get_agreement(agreement_id)
        payload = agreement_signing_payload(ag["id"], ag["owner_did"], ag["provider_did"],
                                            ag["agreement_hash"], ag["valid_time"], ag["copyrights"])
        return self.write(f"/agreements/{agreement_id}/{party}-signature", account, "agreement",
                          f"{party}_sign", {"id": agreement_id, "sig": account.sign(payload).hex()})

    # -- multimedia

    def register_multimedia(self, owner: Account, multimedia_id: str, data: bytes,
                            owner_did: str | None = None, upload: bool = True) -> dict:
        h = sha256_hex(data)
        args = {
            "id": multimedia_id, "owner_did": owner_did or owner.did, "content_hash": h,
            "owner_sig": owner.sign(bytes.fromhex(h)).hex(), "upload_ref": locator(h),
        }
        extra = {"content": base64.b64encode(data).decode()} if upload else None
        return {**self.write("/multimedia", owner, "multimedia", "register", args, extra), "content_hash": h}

    def approve(self, provider: Account, multimedia_id: str, provider_did: str, agreement_hash: str) -> dict:
        args = {"id": multimedia_id, "provider_did": provider_did, "agreement_hash": agreement_hash}
        return self.write(f"/multimedia/{multimedia_id}/approval", provider, "multimedia", "approve", args)

    def deregister(self, owner: Account, multimedia_id: str) -> dict:
        return self.write(f"/multimedia/{multimedia_id}/deregistration", owner, "multimedia",
                          "deregister", {"id": multimedia_id})

    def get_multimedia(self, multimedia_id: str) -> dict:
        return self.get(f"/multimedia/{multimedia_id}")["multimedia"]

    def access_log(self, multimedia_id: str) -> list[str]:
        return self.get(f"/multimedia/{multimedia_id}/access-log")["access_info"]

    def put_blob(self, data: bytes, kind: str = "agreement-document") -> str:
        r = self._request("POST", f"/blobs?kind={kind}", content=data)
        if r.status_code >= 400:
            raise GatewayError(r.status_code, r.json())
        return r.json()["content_hash"]

    # -- access

    def request_access(self, enduser: Account, multimedia_id: str, rights: Right | list[str] | str,
                       duration_ms: int, enduser_did: str | None = None) -> dict:
        if isinstance(rights, Right):
            rights = rights.names
        request = {
            "enduser_did": enduser_did or enduser.did, "multimedia_id": multimedia_id,
            "rights": rights, "duration_ms": duration_ms,
            "nonce": uuid.uuid4().hex, "issued_at": time.time_ns() // 1_000_000,
        }
        return self._json("POST", "/access-requests", json=sign_request(enduser, request))

    def verify_token(self, token: str) -> dict:
        return self._json("POST", "/tokens/verify", json={"token": token})

    def redeem(self, token: str) -> bytes:
        r = self._request("POST", "/content/redeem", json={"token": token})
        if r.status_code >= 400:
            raise GatewayError(r.status_code, r.json())
        return r.content

    def certificate(self, cert_id: str) -> dict:
        return self.get(f"/certificates/{cert_id}")["certificate"]

    def tip(self) -> int:
        return self.get("/chain/tip")["tip"]

    def chain_log(self) -> dict:
        return self.get("/chain/log")
