"""DID registry: binds DIDs to DID documents, owner-only mutation.

Revoking a DID deletes its document but keeps the DID marked as used, so it
can never be registered again.
"""

from __future__ import annotations

import json
import re

from ..crypto import DDO_KEY_TYPE, canonical_json, verify
from ..errors import NotFound
from .base import Registry, arg_address, arg_str, require

DID_RE = re.compile(r"^did:[a-z0-9]+:[A-Za-z0-9._:%\-]+$")
DID_CONTEXT = "https://w3id.org/did/v1"


def is_did(text: object) -> bool:
    return isinstance(text, str) and DID_RE.match(text) is not None


def make_ddo(did: str, public_key: bytes, endpoint: str | None = None) -> str:
    """Canonical DID document for an Ed25519 key, in the W3C DID document layout."""
    doc = {
        "@context": DID_CONTEXT,
        "id": did,
        "publicKey": [
            {
                "id": f"{did}#keys-1",
                "type": DDO_KEY_TYPE,
                "controller": did,
                "publicKeyHex": public_key.hex(),
            }
        ],
        "service": [],
    }
    if endpoint:
        doc["service"].append(
            {"id": f"{did}#contact", "type": "ContactService", "serviceEndpoint": endpoint}
        )
    return canonical_json(doc)


def parse_ddo(text: str, did: str) -> dict:
    """Validate a DID document against ``did``; raises ValueError."""
    try:
        doc = json.loads(text)
    except (TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("document must be an object")
    if not isinstance(doc.get("@context"), str) or not doc["@context"]:
        raise ValueError("missing @context")
    if doc.get("id") != did:
        raise ValueError("document id does not match DID")
    keys = doc.get("publicKey")
    if not isinstance(keys, list) or not keys:
        raise ValueError("at least one public key required")
    for k in keys:
        if not isinstance(k, dict):
            raise ValueError("public key entry must be an object")
        _check_fragment(k.get("id"), did)
        if not isinstance(k.get("type"), str) or not k["type"]:
            raise ValueError("public key type missing")
        if not any(isinstance(v, str) and v for f, v in k.items() if f.startswith("publicKey")):
            raise ValueError("public key material missing")
    services = doc.get("service", [])
    if not isinstance(services, list):
        raise ValueError("service must be a list")
    for s in services:
        if not isinstance(s, dict):
            raise ValueError("service entry must be an object")
        _check_fragment(s.get("id"), did)
        if not isinstance(s.get("serviceEndpoint"), str):
            raise ValueError("serviceEndpoint missing")
    return doc


def _check_fragment(ident: object, did: str) -> None:
    if not (isinstance(ident, str) and ident.startswith(did + "#") and len(ident) > len(did) + 1):
        raise ValueError(f"{ident!r} is not {did} plus a fragment")


def ddo_keys(text: str) -> list[bytes]:
    """Ed25519 keys listed in a stored document."""
    out = []
    for k in json.loads(text).get("publicKey", []):
        if k.get("type") == DDO_KEY_TYPE and isinstance(k.get("publicKeyHex"), str):
            try:
                raw = bytes.fromhex(k["publicKeyHex"])
            except ValueError:
                continue
            if len(raw) == 32:
                out.append(raw)
    return out


def verify_with_ddo(ddo_text: str, message: bytes, signature: bytes) -> bool:
    return any(verify(pk, message, signature) for pk in ddo_keys(ddo_text))


class DidRegistry(Registry):
    name = "did"
    writes = ("register", "update_ddo", "revoke")
    reads = ("resolve", "record", "exists")

    def __init__(self, world) -> None:
        super().__init__(world)
        self.registered: set[str] = set()
        self.records: dict[str, dict] = {}

    # -- writes

    def register(self, caller: str, args: dict) -> None:
        bound = arg_address(args, "bound_account")
        did = arg_str(args, "did")
        ddo = arg_str(args, "ddo")
        require(is_did(did), "malformed-ddo", f"{did!r} is not a DID")
        require(did not in self.registered, "already-registered", did)
        try:
            parse_ddo(ddo, did)
        except ValueError as exc:
            require(False, "malformed-ddo", str(exc))
        self.registered.add(did)
        self.records[did] = {"owner": caller, "bound_account": bound, "did": did, "ddo": ddo}

    def update_ddo(self, caller: str, args: dict) -> None:
        did = arg_str(args, "did")
        ddo = arg_str(args, "ddo")
        rec = self._live_for_write(did)
        require(caller == rec["owner"], "not-owner")
        try:
            parse_ddo(ddo, did)
        except ValueError as exc:
            require(False, "malformed-ddo", str(exc))
        rec["ddo"] = ddo

    def revoke(self, caller: str, args: dict) -> None:
        did = arg_str(args, "did")
        rec = self._live_for_write(did)
        require(caller == rec["owner"], "not-owner")
        del self.records[did]

    def _live_for_write(self, did: str) -> dict:
        require(did in self.registered, "not-found", did)
        require(did in self.records, "revoked", did)
        return self.records[did]

    # -- views

    def record(self, did: str) -> dict:
        if did in self.records:
            return self.records[did]
        if did in self.registered:
            raise NotFound("revoked", f"{did} has been revoked")
        raise NotFound("not-found", f"{did} is not registered")

    def resolve(self, did: str) -> str:
        return self.record(did)["ddo"]

    def exists(self, did: str) -> bool:
        return did in self.records

    # -- helpers for sibling registries (no copying, apply-time only)

    def live(self, did: str) -> dict | None:
        return self.records.get(did)

    def snapshot(self) -> dict:
        return {"registered": sorted(self.registered), "records": self.records}
