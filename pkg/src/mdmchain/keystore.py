"""Local key files, one per identity.

File format (canonical JSON, version 1)::

    {"address": <hex>, "did": <DID>, "format": "mdmchain-keystore",
     "name": <label>, "public_key": <hex>, "scheme": "Ed25519",
     "secret_key": <hex>, "version": 1}

Secret material stays in this file; nothing here is ever sent to a gateway.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .crypto import SCHEME, Account, canonical_json
from .errors import ConfigError

FORMAT = "mdmchain-keystore"
VERSION = 1


@dataclass
class Keystore:
    name: str
    account: Account
    did: str

    @classmethod
    def create(cls, name: str, account: Account | None = None, did: str | None = None) -> "Keystore":
        account = account or Account.generate()
        return cls(name, account, did or account.did)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "name": self.name,
            "scheme": SCHEME,
            "secret_key": self.account.secret_key.hex(),
            "public_key": self.account.public_key.hex(),
            "address": self.account.address,
            "did": self.did,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as f:
            f.write(canonical_json(self.to_dict()) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Keystore":
        try:
            d = json.loads(Path(path).read_text())
            if d.get("format") != FORMAT or d.get("version") != VERSION:
                raise ValueError("unsupported keystore format/version")
            account = Account.from_secret(bytes.fromhex(d["secret_key"]))
            if account.address != d["address"] or account.public_key.hex() != d["public_key"]:
                raise ValueError("keystore keys are inconsistent")
            return cls(d["name"], account, d["did"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError("bad-keystore", f"{path}: {exc}") from None


def keystore_path(directory: str | Path, name: str) -> Path:
    return Path(directory) / f"{name}.json"
