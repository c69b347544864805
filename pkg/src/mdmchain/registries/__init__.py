"""The four on-chain registries and the world state that holds them."""

from __future__ import annotations

from ..crypto import canonical_bytes, sha256
from ..errors import UnknownRegistry
from .agreement import ALL_RIGHTS, AgreementRegistry, Right, agreement_signing_payload
from .base import Registry, require
from .certificates import CertificateRegistry, OnchainInfo
from .did import DidRegistry, is_did, make_ddo, parse_ddo, verify_with_ddo
from .multimedia import STORE_SCHEME, MultimediaRegistry

__all__ = [
    "ALL_RIGHTS",
    "AgreementRegistry",
    "CertificateRegistry",
    "DidRegistry",
    "MultimediaRegistry",
    "OnchainInfo",
    "Registry",
    "Right",
    "STORE_SCHEME",
    "World",
    "agreement_signing_payload",
    "is_did",
    "make_ddo",
    "parse_ddo",
    "verify_with_ddo",
]


class World:
    """All registry state. Mutated only by the ledger's apply loop."""

    def __init__(self) -> None:
        self.did = DidRegistry(self)
        self.agreement = AgreementRegistry(self)
        self.multimedia = MultimediaRegistry(self)
        self.certificates = CertificateRegistry(self)
        self.registries: dict[str, Registry] = {
            r.name: r for r in (self.did, self.agreement, self.multimedia, self.certificates)
        }

    def registry(self, name: str) -> Registry:
        try:
            return self.registries[name]
        except KeyError:
            raise UnknownRegistry("unknown-registry", name) from None

    def apply(self, caller: str, registry: str, op: str, args: dict) -> None:
        """Run one write; raises Revert on a failed precondition."""
        require(registry in self.registries, "unknown-registry", registry)
        self.registries[registry].apply(caller, op, args)

    def state_root(self) -> bytes:
        return sha256(canonical_bytes({n: r.snapshot() for n, r in sorted(self.registries.items())}))
