"""Hashing, Ed25519 accounts and the canonical byte encodings shared by
signer and verifier."""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

SCHEME = "Ed25519"
DDO_KEY_TYPE = "Ed25519VerificationKey2018"
ZERO_HASH = bytes(32)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj) -> str:
    """Key-sorted, whitespace-free JSON. Used for every hashed/signed document."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")


def lp_encode(*parts: bytes) -> bytes:
    """Concatenate fields, each prefixed by its 4-byte big-endian length."""
    out = bytearray()
    for p in parts:
        out += struct.pack(">I", len(p))
        out += p
    return bytes(out)


def u64(n: int) -> bytes:
    return struct.pack(">Q", n)


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    """Strict decode: rejects anything that does not re-encode to ``text``.

    Unpadded base64 leaves slack bits in the final character, so a lenient
    decoder maps several strings onto the same bytes.
    """
    if not isinstance(text, str) or not text.isascii():
        raise ValueError("not ascii")
    pad = "=" * (-len(text) % 4)
    data = base64.urlsafe_b64decode(text + pad)
    if b64url_encode(data) != text:
        raise ValueError("non-canonical base64url")
    return data


def hex_bytes(text: str, length: int | None = None) -> bytes:
    if not isinstance(text, str) or text != text.lower():
        raise ValueError("expected lowercase hex")
    raw = bytes.fromhex(text)
    if length is not None and len(raw) != length:
        raise ValueError(f"expected {length} bytes, got {len(raw)}")
    return raw


def address_of(public_key: bytes) -> str:
    """Account address: first 20 bytes of SHA-256(public key), lowercase hex."""
    return sha256(public_key)[:20].hex()


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True)
class Account:
    secret_key: bytes
    public_key: bytes

    @classmethod
    def generate(cls) -> "Account":
        return cls.from_secret(
            Ed25519PrivateKey.generate().private_bytes(
                serialization.Encoding.Raw,
                serialization.PrivateFormat.Raw,
                serialization.NoEncryption(),
            )
        )

    @classmethod
    def from_secret(cls, secret_key: bytes) -> "Account":
        sk = Ed25519PrivateKey.from_private_bytes(secret_key)
        pk = sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return cls(secret_key=bytes(secret_key), public_key=pk)

    @classmethod
    def from_seed(cls, seed: str | bytes) -> "Account":
        """Deterministic account for fixtures and benchmarks."""
        if isinstance(seed, str):
            seed = seed.encode()
        return cls.from_secret(sha256(b"mdmchain-seed:" + seed))

    @property
    def address(self) -> str:
        return address_of(self.public_key)

    @property
    def did(self) -> str:
        """Platform-minted DID for this account."""
        return f"did:mdm:{self.address}"

    def sign(self, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(self.secret_key).sign(message)

    def __repr__(self) -> str:
        return f"Account(address={self.address})"
