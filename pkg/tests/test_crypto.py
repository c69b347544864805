from __future__ import annotations

import hashlib

import pytest
from hypothesis import given, strategies as st

from mdmchain.crypto import (
    Account,
    address_of,
    b64url_decode,
    b64url_encode,
    canonical_json,
    hex_bytes,
    lp_encode,
    u64,
    verify,
)

# RFC 8032, section 7.1, test 1 (empty message)
RFC_SK = bytes.fromhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
RFC_PK = bytes.fromhex("d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a")
RFC_SIG = bytes.fromhex(
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
)


def test_ed25519_known_answer():
    acct = Account.from_secret(RFC_SK)
    assert acct.public_key == RFC_PK
    assert acct.sign(b"") == RFC_SIG
    assert verify(RFC_PK, b"", RFC_SIG)
    assert not verify(RFC_PK, b"x", RFC_SIG)


def test_verify_rejects_garbage_key_and_sig():
    assert not verify(b"short", b"", RFC_SIG)
    assert not verify(RFC_PK, b"", b"\x00" * 10)


def test_address_is_truncated_sha256():
    assert address_of(RFC_PK) == hashlib.sha256(RFC_PK).hexdigest()[:40]
    acct = Account.from_secret(RFC_SK)
    assert acct.did == "did:mdm:" + acct.address


def test_from_seed_is_deterministic():
    assert Account.from_seed("a") == Account.from_seed("a")
    assert Account.from_seed("a") != Account.from_seed("b")


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1, {"d": 2, "c": "é"}]}) == '{"a":[1,{"c":"é","d":2}],"b":1}'


def test_lp_encode_and_u64():
    assert lp_encode(b"ab", b"") == bytes.fromhex("00000002616200000000")
    assert u64(1) == bytes(7) + b"\x01"
    # length prefixes keep field boundaries unambiguous
    assert lp_encode(b"a", b"bc") != lp_encode(b"ab", b"c")


def test_hex_bytes_requires_lowercase_and_length():
    assert hex_bytes("00ff", 2) == b"\x00\xff"
    with pytest.raises(ValueError):
        hex_bytes("00FF")
    with pytest.raises(ValueError):
        hex_bytes("00", 2)


@given(st.binary(max_size=200))
def test_b64url_round_trip(data):
    text = b64url_encode(data)
    assert "=" not in text and "+" not in text and "/" not in text
    assert b64url_decode(text) == data


def test_b64url_rejects_slack_bits_and_padding():
    assert b64url_encode(b"\xff") == "_w"
    with pytest.raises(ValueError):
        b64url_decode("_x")  # same byte, nonzero slack bits
    with pytest.raises(ValueError):
        b64url_decode("_w==")
    with pytest.raises(ValueError):
        b64url_decode("a+b/")
