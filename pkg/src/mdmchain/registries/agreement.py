"""Agreement registry: copyright licensing terms between an owner and a
provider, settled once both signatures are recorded."""

from __future__ import annotations

from enum import Flag

from ..crypto import hex_bytes, lp_encode, u64
from ..errors import NotFound
from .base import Registry, arg_hex, arg_int, arg_address, arg_str, require
from .did import verify_with_ddo


class Right(Flag):
    """Copyright categories; the bit order is part of the wire format."""

    PUBLICATION = 1
    REVISION = 2
    REPRODUCTION = 4
    EXHIBITION = 8
    PERFORMANCE = 16
    BROADCASTING = 32

    @classmethod
    def parse(cls, names: str | list[str] | tuple[str, ...]) -> "Right":
        if isinstance(names, str):
            names = [n for n in names.split(",") if n.strip()]
        flag = cls(0)
        for n in names:
            try:
                flag |= cls[n.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown right {n!r}") from None
        return flag

    @property
    def names(self) -> list[str]:
        return sorted(r.name.lower() for r in Right if r in self and r.value)

    def text(self) -> str:
        """Sorted, comma-joined names: the on-chain ``copyrights`` encoding."""
        return ",".join(self.names)


ALL_RIGHTS = Right(63)


def agreement_signing_payload(
    agreement_id: str,
    owner_did: str,
    provider_did: str,
    agreement_hash: str,
    valid_time: int,
    copyrights: str,
) -> bytes:
    """Message both parties sign. Byte-identical on the client and in the registry."""
    return lp_encode(
        b"mdmchain/agreement/v1",
        agreement_id.encode(),
        owner_did.encode(),
        provider_did.encode(),
        hex_bytes(agreement_hash, 32),
        u64(valid_time),
        copyrights.encode(),
    )


class AgreementRegistry(Registry):
    name = "agreement"
    writes = ("generate", "owner_sign", "provider_sign")
    reads = ("get", "settled_by_hash")

    def __init__(self, world) -> None:
        super().__init__(world)
        self.agreements: dict[str, dict] = {}
        self.by_hash: dict[str, list[str]] = {}

    def generate(self, caller: str, args: dict) -> None:
        aid = arg_str(args, "id")
        owner_did = arg_str(args, "owner_did")
        owner_account = arg_address(args, "owner_account")
        provider_did = arg_str(args, "provider_did")
        ahash = arg_hex(args, "agreement_hash", 32)
        valid_time = arg_int(args, "valid_time")
        copyrights = arg_str(args, "copyrights")
        existing = self.agreements.get(aid)
        require(existing is None or not existing["settled"], "already-settled", aid)
        dids = self.world.did
        owner_rec, provider_rec = dids.live(owner_did), dids.live(provider_did)
        require(owner_rec is not None, "unknown-did", owner_did)
        require(provider_rec is not None, "unknown-did", provider_did)
        require(owner_rec["owner"] == owner_account, "party-mismatch", "owner account does not control owner DID")
        require(provider_rec["owner"] == caller, "not-provider", "caller does not control provider DID")
        try:
            rights = Right.parse(copyrights)
        except ValueError as exc:
            require(False, "bad-args", str(exc))
        require(bool(rights) and rights.text() == copyrights, "bad-args", "copyrights must be sorted, comma-joined right names")

        if existing is not None:
            self.by_hash[existing["agreement_hash"]].remove(aid)
            if not self.by_hash[existing["agreement_hash"]]:
                del self.by_hash[existing["agreement_hash"]]
        # a redraft discards any signature over the old terms
        self.agreements[aid] = {
            "id": aid,
            "owner_did": owner_did,
            "owner_account": owner_account,
            "provider_did": provider_did,
            "provider_account": caller,
            "agreement_hash": ahash,
            "valid_time": valid_time,
            "copyrights": copyrights,
            "owner_sig": "",
            "provider_sig": "",
            "owner_signed": False,
            "provider_signed": False,
            "settled": False,
        }
        self.by_hash.setdefault(ahash, []).append(aid)

    def owner_sign(self, caller: str, args: dict) -> None:
        self._sign(caller, args, "owner")

    def provider_sign(self, caller: str, args: dict) -> None:
        self._sign(caller, args, "provider")

    def _sign(self, caller: str, args: dict, party: str) -> None:
        aid = arg_str(args, "id")
        sig = arg_hex(args, "sig", 64)
        ag = self.agreements.get(aid)
        require(ag is not None, "not-found", aid)
        require(caller == ag[f"{party}_account"], f"not-{party}")
        require(not ag["settled"], "already-settled", aid)
        require(not ag[f"{party}_signed"], "double-sign")
        rec = self.world.did.live(ag[f"{party}_did"])
        require(rec is not None, "unknown-did", ag[f"{party}_did"])
        payload = agreement_signing_payload(
            ag["id"], ag["owner_did"], ag["provider_did"],
            ag["agreement_hash"], ag["valid_time"], ag["copyrights"],
        )
        require(verify_with_ddo(rec["ddo"], payload, bytes.fromhex(sig)), "bad-signature")
        ag[f"{party}_sig"] = sig
        ag[f"{party}_signed"] = True
        if ag["owner_signed"] and ag["provider_signed"]:
            ag["settled"] = True

    def get(self, aid: str) -> dict:
        try:
            return self.agreements[aid]
        except KeyError:
            raise NotFound("not-found", f"agreement {aid} not found") from None

    def settled_by_hash(self, ahash: str) -> list[dict]:
        return [self.agreements[a] for a in self.by_hash.get(ahash, ()) if self.agreements[a]["settled"]]

    def snapshot(self) -> dict:
        return {"agreements": self.agreements}
