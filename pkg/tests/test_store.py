from __future__ import annotations

import hashlib

import pytest

from mdmchain.errors import NotFound, StoreError
from mdmchain.store import BlobStore, locator, parse_locator


def test_put_get_layout(tmp_path):
    store = BlobStore(tmp_path)
    h = store.put(b"hello", "agreement-document")
    assert h == hashlib.sha256(b"hello").hexdigest()
    assert store.path(h) == tmp_path / "objects" / h[:2] / h[2:4] / h
    assert store.get(h) == b"hello"
    assert store.kind(h) == "agreement-document"
    assert store.exists(h)
    assert store.put(b"hello", "agreement-document") == h  # idempotent
    assert not list((tmp_path / "tmp").iterdir())


def test_errors(tmp_path):
    store = BlobStore(tmp_path)
    with pytest.raises(StoreError) as e:
        store.put(b"")
    assert e.value.code == "empty-blob"
    with pytest.raises(StoreError) as e:
        store.put(b"x", "movie")
    assert e.value.code == "bad-kind"
    with pytest.raises(NotFound):
        store.get("0" * 64)
    with pytest.raises(NotFound):
        store.get("../../etc/passwd")
    assert not store.exists("nothex")


def test_delete(tmp_path):
    store = BlobStore(tmp_path)
    h = store.put(b"bytes")
    store.delete(h)
    assert not store.exists(h)
    with pytest.raises(NotFound):
        store.delete(h)


def test_get_returns_raw_bytes_even_if_corrupted(tmp_path):
    store = BlobStore(tmp_path)
    h = store.put(b"abc")
    store.path(h).write_bytes(b"abd")
    assert store.get(h) == b"abd"  # the reader does the integrity check


def test_locator():
    h = "ab" * 32
    assert parse_locator(locator(h)) == h
    for bad in ("http://x", "store://abc", h):
        with pytest.raises(ValueError):
            parse_locator(bad)
