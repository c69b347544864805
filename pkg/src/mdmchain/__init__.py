"""Decentralized identity and copyright licensing for multimedia works."""

from __future__ import annotations

from .crypto import Account
from .errors import MdmError, Revert, VerificationFailed
from .ledger import ChainConfig, Ledger, Transaction, replay
from .registries import Right, World
from .store import BlobStore
from .tokens import AccessToken, generate_token, redeem, verify_token

__version__ = "0.1.0"

__all__ = [
    "AccessToken", "Account", "BlobStore", "ChainConfig", "Ledger", "MdmError", "Revert",
    "Right", "Transaction", "VerificationFailed", "World", "generate_token", "redeem",
    "replay", "verify_token",
]
