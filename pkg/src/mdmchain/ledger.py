"""Embedded single-authority ledger.

Signed transactions enter a FIFO pool; a sealer cuts a block once the block
interval has elapsed, applying transactions to the registries one by one. A
reverted transaction still occupies its slot in the block but changes no
state. Reads go against the last committed state and never create
transactions.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from .crypto import (
    ZERO_HASH,
    Account,
    address_of,
    canonical_bytes,
    canonical_json,
    hex_bytes,
    sha256,
    verify,
)
from .errors import ConfigError, CorruptLog, Revert, SubmitError
from .registries import World

log = logging.getLogger(__name__)

CHAIN_FILE = "chain.jsonl"
TX_DOMAIN = b"mdmchain/tx/v1\x00"


def now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass(frozen=True)
class Transaction:
    sender: str
    public_key: str
    nonce: int
    registry: str
    op: str
    payload: str
    signature: str

    @classmethod
    def create(cls, account: Account, registry: str, op: str, args: dict, nonce: int) -> "Transaction":
        unsigned = cls(account.address, account.public_key.hex(), nonce, registry, op, canonical_json(args), "")
        return cls(**{**unsigned.to_dict(), "signature": account.sign(unsigned.signing_bytes()).hex()})

    @property
    def target(self) -> str:
        return f"{self.registry}.{self.op}"

    def signing_bytes(self) -> bytes:
        return TX_DOMAIN + canonical_bytes(
            {
                "sender": self.sender,
                "public_key": self.public_key,
                "nonce": self.nonce,
                "target": self.target,
                "payload": self.payload,
            }
        )

    @property
    def hash(self) -> str:
        return sha256(self.signing_bytes() + self.signature.encode()).hex()

    @property
    def args(self) -> dict:
        return json.loads(self.payload)

    def check_signature(self) -> bool:
        try:
            pk = hex_bytes(self.public_key, 32)
            sig = hex_bytes(self.signature, 64)
        except (ValueError, TypeError):
            return False
        return address_of(pk) == self.sender and verify(pk, self.signing_bytes(), sig)

    def to_dict(self) -> dict:
        return {
            "sender": self.sender,
            "public_key": self.public_key,
            "nonce": self.nonce,
            "registry": self.registry,
            "op": self.op,
            "payload": self.payload,
            "signature": self.signature,
        }

    @classmethod
    def from_dict(cls, d: Any) -> "Transaction":
        fields = ("sender", "public_key", "nonce", "registry", "op", "payload", "signature")
        if not isinstance(d, dict) or set(d) != set(fields):
            raise ValueError("transaction must have exactly the fields " + ", ".join(fields))
        if not isinstance(d["nonce"], int) or isinstance(d["nonce"], bool) or d["nonce"] < 1:
            raise ValueError("nonce must be a positive integer")
        for f in fields:
            if f != "nonce" and not isinstance(d[f], str):
                raise ValueError(f"{f} must be a string")
        return cls(**d)


@dataclass(frozen=True)
class Receipt:
    tx_hash: str
    height: int
    status: str  # "success" | "revert"
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {"tx_hash": self.tx_hash, "height": self.height, "status": self.status, "reason": self.reason}


class ReceiptHandle:
    """Resolves to a Receipt once the transaction's block is sealed."""

    def __init__(self, tx: Transaction) -> None:
        self.tx = tx
        self.tx_hash = tx.hash
        self._event = threading.Event()
        self._receipt: Receipt | None = None

    def _resolve(self, receipt: Receipt) -> None:
        self._receipt = receipt
        self._event.set()

    @property
    def done(self) -> bool:
        return self._event.is_set()

    def wait(self, timeout: float | None = None) -> Receipt:
        if not self._event.wait(timeout):
            raise TimeoutError(f"transaction {self.tx_hash} not sealed within {timeout}s")
        assert self._receipt is not None
        return self._receipt


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: str
    timestamp: int
    transactions: tuple[Transaction, ...]
    results: tuple[tuple[str, str], ...]
    weight: int
    state_root: str
    sealer: str
    block_hash: str = ""
    signature: str = ""

    def header(self) -> dict:
        return {
            "height": self.height,
            "parent_hash": self.parent_hash,
            "timestamp": self.timestamp,
            "tx_root": sha256("".join(t.hash for t in self.transactions).encode()).hex(),
            "weight": self.weight,
            "state_root": self.state_root,
            "sealer": self.sealer,
        }

    def compute_hash(self) -> str:
        return sha256(canonical_bytes(self.header())).hex()

    def to_dict(self) -> dict:
        return {
            **self.header(),
            "block_hash": self.block_hash,
            "signature": self.signature,
            "transactions": [t.to_dict() for t in self.transactions],
            "results": [list(r) for r in self.results],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        return cls(
            height=d["height"],
            parent_hash=d["parent_hash"],
            timestamp=d["timestamp"],
            transactions=tuple(Transaction.from_dict(t) for t in d["transactions"]),
            results=tuple((r[0], r[1]) for r in d["results"]),
            weight=d["weight"],
            state_root=d["state_root"],
            sealer=d["sealer"],
            block_hash=d["block_hash"],
            signature=d["signature"],
        )


@dataclass
class ChainConfig:
    block_interval_ms: int = 1000
    block_capacity: int = 200
    # per-operation weights keyed "registry.op"; anything unlisted weighs 1
    weights: dict[str, int] = field(default_factory=dict)
    pool_limit: int = 1_000_000
    data_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.block_interval_ms <= 0:
            raise ConfigError("bad-config", "block_interval_ms must be positive")
        if self.block_capacity < max([1, *self.weights.values()]):
            raise ConfigError("bad-config", "block_capacity below the heaviest transaction weight")
        if any(w < 1 for w in self.weights.values()):
            raise ConfigError("bad-config", "weights must be positive")
        if self.data_dir is not None:
            self.data_dir = Path(self.data_dir)

    def weight(self, target: str) -> int:
        return self.weights.get(target, 1)

    @classmethod
    def from_file(cls, path: str | Path) -> "ChainConfig":
        try:
            raw = json.loads(Path(path).read_text())
            return cls(**raw)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError("bad-config", f"{path}: {exc}") from None


def _apply(world: World, tx: Transaction) -> tuple[str, str]:
    try:
        args = json.loads(tx.payload)
        world.apply(tx.sender, tx.registry, tx.op, args)
    except Revert as r:
        return ("revert", r.code)
    except json.JSONDecodeError:
        return ("revert", "bad-args")
    return ("success", "")


def _check_nonces(txs: Iterable[Transaction], last: dict[str, int]) -> None:
    for tx in txs:
        if not tx.check_signature():
            raise CorruptLog("corrupt-log", f"bad signature on {tx.hash}")
        if tx.nonce != last.get(tx.sender, 0) + 1:
            raise CorruptLog("corrupt-log", f"nonce {tx.nonce} out of order for {tx.sender}")
        last[tx.sender] = tx.nonce


def _sealed_by(block: "Block", authority: Account) -> bool:
    try:
        return verify(authority.public_key, bytes.fromhex(block.block_hash), bytes.fromhex(block.signature))
    except ValueError:
        return False


def replay(log: Iterable[Transaction | dict]) -> bytes:
    """Rebuild registry state from a committed transaction log; returns the state root."""
    world = World()
    last: dict[str, int] = {}
    for item in log:
        try:
            tx = item if isinstance(item, Transaction) else Transaction.from_dict(item)
        except (ValueError, TypeError) as exc:
            raise CorruptLog("corrupt-log", str(exc)) from None
        _check_nonces([tx], last)
        _apply(world, tx)
    return world.state_root()


class Ledger:
    """Thread-safe handle: submit and query from any thread; one sealer applies."""

    def __init__(
        self,
        config: ChainConfig | None = None,
        authority: Account | None = None,
        *,
        clock: Callable[[], int] = now_ms,
    ) -> None:
        self.config = config or ChainConfig()
        self.authority = authority or Account.from_seed("authority")
        self.clock = clock
        self.world = World()
        self.blocks: list[Block] = []
        self._state_lock = threading.RLock()
        self._pool: deque[ReceiptHandle] = deque()
        self._pool_cond = threading.Condition()
        self._pending_nonce: dict[str, int] = {}
        self._committed_nonce: dict[str, int] = {}
        self._receipts: dict[str, Receipt] = {}
        self._sender_locks: dict[str, threading.Lock] = {}
        self._sender_locks_guard = threading.Lock()
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._chain_file = None
        self._tx_count = 0

        if self.config.data_dir is not None:
            self.config.data_dir.mkdir(parents=True, exist_ok=True)
            path = self.config.data_dir / CHAIN_FILE
            if path.exists() and path.stat().st_size:
                self._load(path)
            self._chain_file = open(path, "a", encoding="utf-8")
        if not self.blocks:
            self._append(self._make_block(0, ZERO_HASH.hex(), 0, (), (), 0))

    # -- block plumbing

    def _make_block(self, height, parent, ts, txs, results, weight) -> Block:
        b = Block(height, parent, ts, tuple(txs), tuple(results), weight,
                  self.world.state_root().hex(), self.authority.address)
        h = b.compute_hash()
        return Block(**{**b.__dict__, "block_hash": h, "signature": self.authority.sign(bytes.fromhex(h)).hex()})

    def _append(self, block: Block) -> None:
        self.blocks.append(block)
        self._tx_count += len(block.transactions)
        if self._chain_file is not None:
            self._chain_file.write(canonical_json(block.to_dict()) + "\n")
            self._chain_file.flush()

    def _load(self, path: Path) -> None:
        last: dict[str, int] = {}
        parent = ZERO_HASH.hex()
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
            try:
                block = Block.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise CorruptLog("corrupt-log", f"{path}:{lineno + 1}: {exc}") from None
            if block.height != len(self.blocks) or block.parent_hash != parent:
                raise CorruptLog("corrupt-log", f"block {block.height} does not extend the chain")
            if block.compute_hash() != block.block_hash:
                raise CorruptLog("corrupt-log", f"block {block.height} hash mismatch")
            if block.sealer != self.authority.address or not _sealed_by(block, self.authority):
                raise CorruptLog("corrupt-log", f"block {block.height} not sealed by this authority")
            _check_nonces(block.transactions, last)
            results = tuple(_apply(self.world, tx) for tx in block.transactions)
            if results != block.results or self.world.state_root().hex() != block.state_root:
                raise CorruptLog("corrupt-log", f"block {block.height} state root mismatch on replay")
            self.blocks.append(block)
            self._tx_count += len(block.transactions)
            parent = block.block_hash
        self._committed_nonce = dict(last)
        self._pending_nonce = dict(last)
        for b in self.blocks:
            for tx, (status, reason) in zip(b.transactions, b.results):
                self._receipts[tx.hash] = Receipt(tx.hash, b.height, status, reason)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    @property
    def tx_count(self) -> int:
        return self._tx_count

    def state_root(self) -> bytes:
        with self._state_lock:
            return self.world.state_root()

    # -- write path

    def submit(self, tx: Transaction) -> ReceiptHandle:
        if tx.registry not in self.world.registries:
            raise SubmitError("unknown-registry", tx.registry)
        if not tx.check_signature():
            raise SubmitError("bad-signature", "signature does not verify under the sender key")
        handle = ReceiptHandle(tx)
        with self._pool_cond:
            if len(self._pool) >= self.config.pool_limit:
                raise SubmitError("pool-full", "transaction pool is full")
            expected = self._pending_nonce.get(tx.sender, 0) + 1
            if tx.nonce != expected:
                raise SubmitError("stale-nonce", f"expected nonce {expected}, got {tx.nonce}")
            self._pending_nonce[tx.sender] = tx.nonce
            self._pool.append(handle)
            self._pool_cond.notify_all()
        return handle

    def next_nonce(self, address: str) -> int:
        with self._pool_cond:
            return self._pending_nonce.get(address, 0) + 1

    def _sender_lock(self, address: str) -> threading.Lock:
        with self._sender_locks_guard:
            return self._sender_locks.setdefault(address, threading.Lock())

    def transact(self, account: Account, registry: str, op: str, args: dict) -> ReceiptHandle:
        """Sign with the next free nonce and submit; safe under concurrency."""
        with self._sender_lock(account.address):
            tx = Transaction.create(account, registry, op, args, self.next_nonce(account.address))
            return self.submit(tx)

    def seal_tick(self, now: int) -> Block | None:
        """Seal a block if the interval has elapsed and the pool is nonempty."""
        if now - self.tip.timestamp < self.config.block_interval_ms:
            return None
        with self._pool_cond:
            if not self._pool:
                return None
            batch: list[ReceiptHandle] = []
            weight = 0
            while self._pool:
                w = self.config.weight(self._pool[0].tx.target)
                if weight + w > self.config.block_capacity:
                    break
                weight += w
                batch.append(self._pool.popleft())
        with self._state_lock:
            results = [_apply(self.world, h.tx) for h in batch]
            block = self._make_block(self.height + 1, self.tip.block_hash, now,
                                     [h.tx for h in batch], results, weight)
            self._append(block)
            for h, (status, reason) in zip(batch, results):
                self._committed_nonce[h.tx.sender] = h.tx.nonce
                self._receipts[h.tx_hash] = Receipt(h.tx_hash, block.height, status, reason)
        for h in batch:
            h._resolve(self._receipts[h.tx_hash])
        if batch:
            log.debug("sealed block %d with %d txs", block.height, len(batch))
        return block

    def seal_now(self) -> Block | None:
        """Seal immediately, as if a full interval had passed. For tests and tools."""
        return self.seal_tick(max(self.clock(), self.tip.timestamp + self.config.block_interval_ms))

    def receipt(self, tx_hash: str) -> Receipt | None:
        return self._receipts.get(tx_hash)

    @property
    def pending(self) -> int:
        with self._pool_cond:
            return len(self._pool)

    # -- read path

    def query(self, registry: str, op: str, *params: Any) -> Any:
        with self._state_lock:
            return self.world.registry(registry).read(op, *params)

    def read_state(self, fn: Callable[[World], Any]) -> Any:
        """Run ``fn`` against one consistent committed snapshot."""
        with self._state_lock:
            return fn(self.world)

    # -- history

    def export_log(self) -> list[Transaction]:
        with self._state_lock:
            return [tx for b in self.blocks for tx in b.transactions]

    def replay(self, log: Iterable[Transaction | dict]) -> bytes:
        """Commit an exported log into this fresh ledger; returns the tip state root."""
        if self.height != 0 or self.pending:
            raise CorruptLog("corrupt-log", "replay requires a fresh ledger")
        txs = []
        for item in log:
            try:
                txs.append(item if isinstance(item, Transaction) else Transaction.from_dict(item))
            except (ValueError, TypeError) as exc:
                raise CorruptLog("corrupt-log", str(exc)) from None
        _check_nonces(txs, {})
        for tx in txs:
            self.submit(tx)
        while self.pending:
            self.seal_now()
        return self.state_root()

    # -- sealing loop

    def start(self) -> "Ledger":
        if self._thread is None:
            self._stop.clear()
            self._thread = threading.Thread(target=self._run, name="ledger-sealer", daemon=True)
            self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        with self._pool_cond:
            self._pool_cond.notify_all()
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    def close(self) -> None:
        self.stop()
        if self._chain_file is not None:
            self._chain_file.close()
            self._chain_file = None

    def __enter__(self) -> "Ledger":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    def _run(self) -> None:
        interval = self.config.block_interval_ms
        while not self._stop.is_set():
            with self._pool_cond:
                if not self._pool:
                    self._pool_cond.wait(0.05)
                    continue
            wait_ms = self.tip.timestamp + interval - self.clock()
            if wait_ms > 0:
                self._stop.wait(min(wait_ms, 50) / 1000)
                continue
            try:
                self.seal_tick(self.clock())
            except Exception:  # keep sealing; a crash here would hang every waiter
                log.exception("sealing failed")
