"""Multimedia registry: registration, provider approval, deregistration and
the per-work access log."""

from __future__ import annotations

from ..errors import NotFound
from .base import Registry, arg_hex, arg_str, require
from .did import verify_with_ddo

STORE_SCHEME = "store://"


class MultimediaRegistry(Registry):
    name = "multimedia"
    writes = ("register", "approve", "deregister", "log_access")
    reads = ("get", "access_log")

    def __init__(self, world) -> None:
        super().__init__(world)
        # ids stay marked after deregistration, mirroring the contract mapping
        self.registered: set[str] = set()
        self.records: dict[str, dict] = {}

    def register(self, caller: str, args: dict) -> None:
        mid = arg_str(args, "id")
        owner_did = arg_str(args, "owner_did")
        content_hash = arg_hex(args, "content_hash", 32)
        owner_sig = arg_hex(args, "owner_sig", 64)
        upload = arg_str(args, "upload_ref")
        require(mid not in self.registered, "already-registered", mid)
        owner = self.world.did.live(owner_did)
        require(owner is not None, "unknown-did", owner_did)
        require(owner["owner"] == caller, "not-owner", "caller does not control owner DID")
        require(upload == STORE_SCHEME + content_hash, "bad-args", "upload_ref must be store://<content hash>")
        require(
            verify_with_ddo(owner["ddo"], bytes.fromhex(content_hash), bytes.fromhex(owner_sig)),
            "bad-owner-signature",
        )
        self.registered.add(mid)
        self.records[mid] = {
            "id": mid,
            "owner_did": owner_did,
            "owner_account": caller,
            "content_hash": content_hash,
            "owner_sig": owner_sig,
            "upload_ref": upload,
            "approved": False,
            "provider_account": "",
            "provider_did": "",
            "agreement_hash": "",
            "access_info": [],
        }

    def approve(self, caller: str, args: dict) -> None:
        mid = arg_str(args, "id")
        provider_did = arg_str(args, "provider_did")
        ahash = arg_hex(args, "agreement_hash", 32)
        rec = self.records.get(mid)
        require(rec is not None, "not-found", mid)
        require(not rec["approved"], "already-approved", mid)
        settled = self.world.agreement.settled_by_hash(ahash)
        require(bool(settled), "agreement-not-settled")
        matching = [
            a for a in settled
            if a["owner_did"] == rec["owner_did"] and a["provider_did"] == provider_did
        ]
        require(bool(matching), "party-mismatch")
        require(any(a["provider_account"] == caller for a in matching), "not-provider")
        require(self.world.did.live(provider_did) is not None, "unknown-did", provider_did)
        rec["approved"] = True
        rec["provider_account"] = caller
        rec["provider_did"] = provider_did
        rec["agreement_hash"] = ahash

    def deregister(self, caller: str, args: dict) -> None:
        mid = arg_str(args, "id")
        rec = self.records.get(mid)
        require(rec is not None, "not-found", mid)
        require(caller == rec["owner_account"], "not-owner")
        del self.records[mid]

    def log_access(self, caller: str, args: dict) -> None:
        mid = arg_str(args, "id")
        cert_id = arg_hex(args, "cert_id", 32)
        rec = self.records.get(mid)
        require(rec is not None, "not-found", mid)
        require(rec["approved"], "not-approved", mid)
        require(caller == rec["provider_account"], "not-provider")
        cert = self.world.certificates.certs.get(cert_id)
        require(cert is not None and cert["multimedia_id"] == mid, "unknown-certificate", cert_id)
        require(cert_id not in rec["access_info"], "already-logged", cert_id)
        rec["access_info"].append(cert_id)

    def append_access(self, mid: str, cert_id: str) -> None:
        """Called by certificate issuance within the same transaction."""
        self.records[mid]["access_info"].append(cert_id)

    def get(self, mid: str) -> dict:
        try:
            return self.records[mid]
        except KeyError:
            raise NotFound("not-found", f"multimedia {mid} not found") from None

    def access_log(self, mid: str) -> list[str]:
        return self.get(mid)["access_info"]

    def live(self, mid: str) -> dict | None:
        return self.records.get(mid)

    def snapshot(self) -> dict:
        return {"registered": sorted(self.registered), "records": self.records}
