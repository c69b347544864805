"""Content-addressed blob store on the local filesystem.

Layout under the root directory::

    objects/<h[0:2]>/<h[2:4]>/<h>         blob bytes
    objects/<h[0:2]>/<h[2:4]>/<h>.kind    media kind label
    tmp/                                  staging area for atomic writes

where ``h`` is the lowercase hex SHA-256 of the bytes. Blobs are published
with ``os.replace`` so a concurrent reader sees either nothing or the whole
blob.
"""

from __future__ import annotations

import errno
import os
import tempfile
from pathlib import Path

from .crypto import sha256_hex
from .errors import NotFound, StoreError

KINDS = ("multimedia-source", "agreement-document", "token-copy")
SCHEME = "store://"


def locator(content_hash: str) -> str:
    return SCHEME + content_hash


def parse_locator(ref: str) -> str:
    if not ref.startswith(SCHEME) or len(ref) != len(SCHEME) + 64:
        raise ValueError(f"not a store locator: {ref!r}")
    return ref[len(SCHEME):]


class BlobStore:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        (self.root / "objects").mkdir(parents=True, exist_ok=True)
        (self.root / "tmp").mkdir(parents=True, exist_ok=True)

    def path(self, content_hash: str) -> Path:
        h = content_hash.lower()
        if len(h) != 64 or any(c not in "0123456789abcdef" for c in h):
            raise NotFound("not-found", f"invalid content hash {content_hash!r}")
        return self.root / "objects" / h[:2] / h[2:4] / h

    def put(self, data: bytes, kind: str = "multimedia-source") -> str:
        if not data:
            raise StoreError("empty-blob", "refusing to store an empty blob")
        if kind not in KINDS:
            raise StoreError("bad-kind", f"unknown media kind {kind!r}")
        h = sha256_hex(data)
        dest = self.path(h)
        if dest.exists():
            return h
        try:
            dest.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.root / "tmp")
            try:
                with os.fdopen(fd, "wb") as f:
                    f.write(data)
                    f.flush()
                    os.fsync(f.fileno())
                dest.with_suffix(".kind").write_text(kind)
                os.replace(tmp, dest)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            if exc.errno in (errno.ENOSPC, errno.EDQUOT):
                raise StoreError("storage-full", str(exc)) from None
            raise
        return h

    def get(self, content_hash: str) -> bytes:
        """Raw stored bytes. Integrity is the caller's check (hash them)."""
        try:
            return self.path(content_hash).read_bytes()
        except FileNotFoundError:
            raise NotFound("not-found", f"no blob {content_hash}") from None

    def kind(self, content_hash: str) -> str:
        try:
            return self.path(content_hash).with_suffix(".kind").read_text()
        except FileNotFoundError:
            raise NotFound("not-found", f"no blob {content_hash}") from None

    def exists(self, content_hash: str) -> bool:
        try:
            return self.path(content_hash).exists()
        except NotFound:
            return False

    def delete(self, content_hash: str) -> None:
        p = self.path(content_hash)
        try:
            p.unlink()
        except FileNotFoundError:
            raise NotFound("not-found", f"no blob {content_hash}") from None
        p.with_suffix(".kind").unlink(missing_ok=True)
