"""Access certificate registry and the canonical OnchainInfo tuple it hashes."""

from __future__ import annotations

from dataclasses import dataclass

from ..crypto import hex_bytes, lp_encode, sha256, u64
from ..errors import NotFound
from .base import Registry, arg_hex, arg_int, arg_str, require
from .did import verify_with_ddo


@dataclass(frozen=True)
class OnchainInfo:
    owner_did: str
    provider_did: str
    enduser_did: str
    multimedia_id: str
    access_rights: int
    not_before: int
    not_after: int
    owner_sig: bytes

    def canonical(self) -> bytes:
        return lp_encode(
            self.owner_did.encode(),
            self.provider_did.encode(),
            self.enduser_did.encode(),
            self.multimedia_id.encode(),
            bytes([self.access_rights]),
            u64(self.not_before) + u64(self.not_after),
            self.owner_sig,
        )

    def cert_id(self) -> str:
        return sha256(self.canonical()).hex()

    @classmethod
    def from_certificate(cls, cert: dict) -> "OnchainInfo":
        """Recompose from the fields stored on-chain."""
        return cls(
            owner_did=cert["owner_did"],
            provider_did=cert["provider_did"],
            enduser_did=cert["enduser_did"],
            multimedia_id=cert["multimedia_id"],
            access_rights=cert["access_rights"],
            not_before=cert["not_before"],
            not_after=cert["not_after"],
            owner_sig=hex_bytes(cert["owner_sig"], 64),
        )


class CertificateRegistry(Registry):
    name = "certificates"
    writes = ("issue_cert",)
    reads = ("get",)

    def __init__(self, world) -> None:
        super().__init__(world)
        self.certs: dict[str, dict] = {}

    def issue_cert(self, caller: str, args: dict) -> None:
        cert_id = arg_hex(args, "cert_id", 32)
        mid = arg_str(args, "multimedia_id")
        provider_did = arg_str(args, "provider_did")
        enduser_did = arg_str(args, "enduser_did")
        owner_sig = arg_hex(args, "owner_sig", 64)
        rights = arg_int(args, "access_rights")
        not_before = arg_int(args, "not_before")
        not_after = arg_int(args, "not_after")
        provider_sig = arg_hex(args, "provider_sig", 64)

        require(cert_id not in self.certs, "already-issued", cert_id)
        rec = self.world.multimedia.live(mid)
        require(rec is not None, "not-found", mid)
        require(rec["approved"], "not-approved", mid)
        require(caller == rec["provider_account"], "not-provider")
        require(provider_did == rec["provider_did"], "party-mismatch", "provider DID")
        require(owner_sig == rec["owner_sig"], "party-mismatch", "owner signature")
        require(self.world.did.live(enduser_did) is not None, "unknown-enduser", enduser_did)
        require(0 < rights < 64, "empty-rights")
        require(not_before < not_after, "bad-args", "empty validity window")
        info = OnchainInfo(
            rec["owner_did"], provider_did, enduser_did, mid, rights,
            not_before, not_after, bytes.fromhex(owner_sig),
        )
        require(info.cert_id() == cert_id, "cert-id-mismatch")
        provider = self.world.did.live(provider_did)
        require(provider is not None, "unknown-did", provider_did)
        require(
            verify_with_ddo(provider["ddo"], info.canonical(), bytes.fromhex(provider_sig)),
            "bad-provider-signature",
        )
        self.certs[cert_id] = {
            "id": cert_id,
            "multimedia_id": mid,
            "owner_did": rec["owner_did"],
            "provider_did": provider_did,
            "enduser_did": enduser_did,
            "owner_sig": owner_sig,
            "access_rights": rights,
            "not_before": not_before,
            "not_after": not_after,
            "provider_sig": provider_sig,
            "content_hash": rec["content_hash"],
            "shared": True,
        }
        self.world.multimedia.append_access(mid, cert_id)

    def get(self, cert_id: str) -> dict:
        try:
            return self.certs[cert_id]
        except KeyError:
            raise NotFound("not-found", f"certificate {cert_id} not found") from None

    def snapshot(self) -> dict:
        return {"certs": self.certs}
