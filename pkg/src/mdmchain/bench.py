"""Load generator for the seven core services.

Each service is driven with ``total_requests`` requests by ``batch_size``
concurrent workers, each issuing synchronous HTTP calls. Request bodies are
signed before the clock starts, so the timed window measures the gateway.
Fixtures are seeded up front, one pool per service.
"""

from __future__ import annotations

import base64
import csv
import json
import logging
import os
import platform
import statistics
import tempfile
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import httpx

from .client import GatewayClient, GatewayError
from .crypto import Account, sha256_hex
from .errors import ConfigError, MdmError
from .gateway import Gateway, sign_request, start
from .keystore import Keystore
from .ledger import ChainConfig, Ledger, Transaction
from .registries import Right, agreement_signing_payload, make_ddo
from .store import BlobStore, locator

log = logging.getLogger(__name__)

SERVICES = (
    "did-registration",
    "did-resolution",
    "agreement-generation",
    "multimedia-registration",
    "multimedia-deregistration",
    "token-generation",
    "token-verification",
)
READ_SERVICES = frozenset({"did-resolution", "token-verification"})
WRITE_SERVICES = tuple(s for s in SERVICES if s not in READ_SERVICES)


@dataclass
class BenchConfig:
    total_requests: int = 2000
    batch_size: int = 20
    services: tuple[str, ...] = SERVICES
    block_interval_ms: int = 1000
    block_capacity: int = 200
    # external gateway; None starts a fresh in-process one
    url: str | None = None
    operator_keystore: str | None = None
    token_duration_ms: int = 3_600_000
    content_size: int = 256
    seed: str = "bench"

    def __post_init__(self) -> None:
        self.services = tuple(self.services)
        unknown = set(self.services) - set(SERVICES)
        if unknown:
            raise ConfigError("bad-config", f"unknown services: {sorted(unknown)}")
        if self.batch_size < 1 or self.total_requests < 0:
            raise ConfigError("bad-config", "batch_size must be >= 1 and total_requests >= 0")
        if self.total_requests % self.batch_size:
            raise ConfigError("bad-config", "total_requests must be divisible by batch_size")

    @classmethod
    def from_file(cls, path: str | Path) -> "BenchConfig":
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError("bad-config", f"{path}: {exc}") from None


@dataclass
class ServiceResult:
    service: str
    requests: int
    completed: int
    errors: int
    wall_s: float
    tps: float
    p50_ms: float
    p95_ms: float
    chain_txs: int
    error_codes: dict[str, int] = field(default_factory=dict)


@dataclass
class BenchReport:
    results: dict[str, ServiceResult] = field(default_factory=dict)
    environment: dict = field(default_factory=dict)

    def tps(self, service: str) -> float:
        return self.results[service].tps

    def to_dict(self) -> dict:
        return {"environment": self.environment,
                "results": {k: asdict(v) for k, v in self.results.items()}}


def emit_csv(report: BenchReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["service", "tps", "p50_ms", "p95_ms", "errors"])
        for name in SERVICES:
            r = report.results.get(name)
            if r is not None:
                w.writerow([name, f"{r.tps:.2f}", f"{r.p50_ms:.2f}", f"{r.p95_ms:.2f}", r.errors])
    return path


# A prepared request: (method, path, json body or None)
Call = tuple[str, str, "dict | None"]


def _percentile(sorted_ms: list[float], q: float) -> float:
    if not sorted_ms:
        return 0.0
    if len(sorted_ms) == 1:
        return sorted_ms[0]
    return statistics.quantiles(sorted_ms, n=100, method="inclusive")[int(q) - 1]


class _Seeder:
    """Bulk fixture writer: fire-and-forget submits, then wait for receipts."""

    def __init__(self, client: GatewayClient) -> None:
        self.client = client
        self.nonces: dict[str, int] = {}
        self.pending: list[str] = []

    def tx(self, account: Account, registry: str, op: str, args: dict) -> None:
        addr = account.address
        nonce = self.nonces.get(addr) or self.client.next_nonce(addr)
        tx = Transaction.create(account, registry, op, args, nonce)
        self.nonces[addr] = nonce + 1
        self.pending.append(self.client.submit_tx(tx.to_dict(), wait=False)["tx_hash"])

    def flush(self, timeout: float = 600.0) -> None:
        deadline = time.monotonic() + timeout
        for h in self.pending:
            while True:
                try:
                    r = self.client.get(f"/transactions/{h}")
                    break
                except GatewayError as exc:
                    if exc.status != 404 or time.monotonic() > deadline:
                        raise
                    time.sleep(0.05)
            if r["status"] != "success":
                raise MdmError("fixture-failed", f"fixture transaction reverted: {r['reason']}")
        self.pending.clear()


class _Bench:
    def __init__(self, cfg: BenchConfig, client: GatewayClient, operator: Account) -> None:
        self.cfg = cfg
        self.client = client
        self.operator = operator
        self.per_worker = cfg.total_requests // cfg.batch_size
        self.tag = f"{cfg.seed}-{uuid.uuid4().hex[:8]}"
        self.prepared: dict[str, list[list[Call]]] = {}
        self._content_counter = 0

    def acct(self, *parts: object) -> Account:
        return Account.from_seed("/".join(map(str, (self.tag, *parts))))

    def content(self) -> bytes:
        self._content_counter += 1
        head = f"{self.tag}:{self._content_counter}:".encode()
        return head + os.urandom(max(self.cfg.content_size - len(head), 1))

    # -- fixtures, seeded in phases so dependent writes share blocks

    def seed(self) -> None:
        c, B, n, svc = self.client, self.cfg.batch_size, self.per_worker, set(self.cfg.services)
        s = _Seeder(c)
        dids: list[Account] = []
        owner, tok_owner = self.acct("owner"), self.acct("tok-owner")
        self.resolve_pool: list[str] = []
        if "did-resolution" in svc:
            holder = self.acct("resolve-holder")
            for k in range(min(self.cfg.total_requests, 100)):
                did = f"did:mdm:{holder.address}-{k}"
                s.tx(holder, "did", "register",
                     {"bound_account": holder.address, "did": did, "ddo": make_ddo(did, holder.public_key)})
                self.resolve_pool.append(did)
        if "agreement-generation" in svc:
            dids += [owner] + [self.acct("ag-provider", i) for i in range(B)]
        if "multimedia-registration" in svc:
            dids += [self.acct("reg-owner", i) for i in range(B)]
        if "multimedia-deregistration" in svc:
            dids += [self.acct("dereg-owner", i) for i in range(B)]
        token_media: dict[str, str] = {}
        if "token-generation" in svc:
            dids += [self.acct("tg-user", i) for i in range(B)]
            token_media["token-generation"] = f"{self.tag}-tg-media"
        if "token-verification" in svc:
            dids += [self.acct("tv-user", i) for i in range(B)]
            token_media["token-verification"] = f"{self.tag}-tv-media"
        if token_media:
            dids += [tok_owner]
            try:
                c.did_record(self.operator.did)
            except GatewayError:
                dids.append(self.operator)
        for a in dids:
            s.tx(a, "did", "register", {"bound_account": a.address, "did": a.did,
                                        "ddo": make_ddo(a.did, a.public_key)})
        s.flush()

        self.dereg_ids: list[list[str]] = []
        if "multimedia-deregistration" in svc:
            for i in range(B):
                o = self.acct("dereg-owner", i)
                ids = []
                for k in range(n):
                    mid = f"{self.tag}-dereg-{i}-{k}"
                    h = sha256_hex(self.content())
                    s.tx(o, "multimedia", "register", {
                        "id": mid, "owner_did": o.did, "content_hash": h,
                        "owner_sig": o.sign(bytes.fromhex(h)).hex(), "upload_ref": locator(h)})
                    ids.append(mid)
                self.dereg_ids.append(ids)
        ahash = sha256_hex(f"{self.tag} agreement".encode())
        terms = {"id": f"{self.tag}-agreement", "owner_did": tok_owner.did, "owner_account": tok_owner.address,
                 "provider_did": self.operator.did, "agreement_hash": ahash,
                 "valid_time": 10 * 365 * 86400, "copyrights": Right(63).text()}
        for mid in token_media.values():
            data = self.content()
            h = c.put_blob(data, "multimedia-source")
            s.tx(tok_owner, "multimedia", "register", {
                "id": mid, "owner_did": tok_owner.did, "content_hash": h,
                "owner_sig": tok_owner.sign(bytes.fromhex(h)).hex(), "upload_ref": locator(h)})
        if token_media:
            s.tx(self.operator, "agreement", "generate", terms)
        s.flush()
        if token_media:
            msg = agreement_signing_payload(terms["id"], terms["owner_did"], terms["provider_did"],
                                            ahash, terms["valid_time"], terms["copyrights"])
            s.tx(tok_owner, "agreement", "owner_sign", {"id": terms["id"], "sig": tok_owner.sign(msg).hex()})
            s.tx(self.operator, "agreement", "provider_sign", {"id": terms["id"], "sig": self.operator.sign(msg).hex()})
            s.flush()
            for mid in token_media.values():
                s.tx(self.operator, "multimedia", "approve",
                     {"id": mid, "provider_did": self.operator.did, "agreement_hash": ahash})
            s.flush()
        self.token_media = token_media
        self.token_pool: list[str] = []
        if "token-verification" in svc:
            self.token_pool = self._issue_tokens(
                [self.acct("tv-user", i) for i in range(B)], token_media["token-verification"])

    def _issue_tokens(self, users: list[Account], mid: str) -> list[str]:
        out: list[str | None] = [None] * len(users)

        def one(i: int) -> None:
            with GatewayClient(self.client.url) as c:
                out[i] = c.request_access(users[i], mid, Right.PERFORMANCE, self.cfg.token_duration_ms)["token"]

        threads = [threading.Thread(target=one, args=(i,)) for i in range(len(users))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if any(t is None for t in out):
            raise MdmError("fixture-failed", "could not issue verification tokens")
        return out  # type: ignore[return-value]

    # -- request preparation (signing happens here, outside the timed window)

    def prepare(self, service: str) -> list[list[Call]]:
        B, n = self.cfg.batch_size, self.per_worker
        build = getattr(self, "_prep_" + service.replace("-", "_"))
        return [build(i, n) for i in range(B)]

    def _prep_did_registration(self, i: int, n: int) -> list[Call]:
        a = self.acct("didreg", i)
        calls = []
        for k in range(n):
            did = f"did:mdm:{a.address}-{k}"
            tx = Transaction.create(a, "did", "register",
                                    {"bound_account": a.address, "did": did, "ddo": make_ddo(did, a.public_key)}, k + 1)
            calls.append(("POST", "/dids", {"tx": tx.to_dict()}))
        return calls

    def _prep_did_resolution(self, i: int, n: int) -> list[Call]:
        pool = self.resolve_pool
        return [("GET", f"/dids/{pool[(i * n + k) % len(pool)]}", None) for k in range(n)]

    def _prep_agreement_generation(self, i: int, n: int) -> list[Call]:
        p, owner = self.acct("ag-provider", i), self.acct("owner")
        start_nonce = self.client.next_nonce(p.address)
        calls = []
        for k in range(n):
            args = {"id": f"{self.tag}-ag-{i}-{k}", "owner_did": owner.did, "owner_account": owner.address,
                    "provider_did": p.did, "agreement_hash": sha256_hex(f"{self.tag}/{i}/{k}".encode()),
                    "valid_time": 86400, "copyrights": "performance,publication"}
            tx = Transaction.create(p, "agreement", "generate", args, start_nonce + k)
            calls.append(("POST", "/agreements", {"tx": tx.to_dict()}))
        return calls

    def _prep_multimedia_registration(self, i: int, n: int) -> list[Call]:
        o = self.acct("reg-owner", i)
        start_nonce = self.client.next_nonce(o.address)
        calls = []
        for k in range(n):
            data = self.content()
            h = sha256_hex(data)
            args = {"id": f"{self.tag}-reg-{i}-{k}", "owner_did": o.did, "content_hash": h,
                    "owner_sig": o.sign(bytes.fromhex(h)).hex(), "upload_ref": locator(h)}
            tx = Transaction.create(o, "multimedia", "register", args, start_nonce + k)
            calls.append(("POST", "/multimedia", {"tx": tx.to_dict(), "content": base64.b64encode(data).decode()}))
        return calls

    def _prep_multimedia_deregistration(self, i: int, n: int) -> list[Call]:
        o = self.acct("dereg-owner", i)
        start_nonce = self.client.next_nonce(o.address)
        calls = []
        for k, mid in enumerate(self.dereg_ids[i]):
            tx = Transaction.create(o, "multimedia", "deregister", {"id": mid}, start_nonce + k)
            calls.append(("POST", f"/multimedia/{mid}/deregistration", {"tx": tx.to_dict()}))
        return calls

    def _prep_token_generation(self, i: int, n: int) -> list[Call]:
        u = self.acct("tg-user", i)
        mid = self.token_media["token-generation"]
        calls = []
        for k in range(n):
            req = {"enduser_did": u.did, "multimedia_id": mid, "rights": ["performance"],
                   "duration_ms": self.cfg.token_duration_ms, "nonce": f"{self.tag}-{i}-{k}",
                   "issued_at": time.time_ns() // 1_000_000}
            calls.append(("POST", "/access-requests", sign_request(u, req)))
        return calls

    def _prep_token_verification(self, i: int, n: int) -> list[Call]:
        pool = self.token_pool
        return [("POST", "/tokens/verify", {"token": pool[(i * n + k) % len(pool)]}) for k in range(n)]

    # -- the timed window

    def drive(self, service: str, calls: list[list[Call]]) -> ServiceResult:
        latencies: list[float] = []
        errors: dict[str, int] = {}
        lock = threading.Lock()
        ready = threading.Barrier(len(calls) + 1)
        is_read = service in READ_SERVICES

        def worker(queue: list[Call]) -> None:
            mine, errs = [], {}
            with httpx.Client(base_url=self.client.url, timeout=300.0) as http:
                ready.wait()
                for method, path, body in queue:
                    t0 = time.perf_counter()
                    try:
                        r = http.request(method, path, json=body)
                        ok = r.status_code < 400
                        if ok and service == "token-verification":
                            ok = r.json().get("outcome") == "accept"
                        code = "" if ok else (r.json().get("error") or r.json().get("failed_step_name") or str(r.status_code))
                    except httpx.TransportError as exc:
                        ok, code = False, f"transport:{type(exc).__name__}"
                    if ok:
                        mine.append((time.perf_counter() - t0) * 1000)
                    else:
                        errs[code] = errs.get(code, 0) + 1
            with lock:
                latencies.extend(mine)
                for k, v in errs.items():
                    errors[k] = errors.get(k, 0) + v

        before = self.client.get("/chain/tip")
        threads = [threading.Thread(target=worker, args=(q,), daemon=True) for q in calls]
        for t in threads:
            t.start()
        ready.wait()
        t0 = time.perf_counter()
        for t in threads:
            t.join()
        wall = time.perf_counter() - t0
        after = self.client.get("/chain/tip")
        lat = sorted(latencies)
        total = sum(len(q) for q in calls)
        chain_txs = after["tx_count"] - before["tx_count"]
        if is_read and (chain_txs or after["pending"]):
            log.warning("%s: %d transactions appeared during a read-only window", service, chain_txs)
        return ServiceResult(
            service=service,
            requests=total,
            completed=len(lat),
            errors=total - len(lat),
            wall_s=wall,
            tps=len(lat) / wall if wall > 0 else 0.0,
            p50_ms=_percentile(lat, 50),
            p95_ms=_percentile(lat, 95),
            chain_txs=chain_txs,
            error_codes=errors,
        )


def run_bench(cfg: BenchConfig, progress: Callable[[str], None] | None = None) -> BenchReport:
    """Seed fixtures, then drive each selected service in turn."""
    say = progress or (lambda msg: log.info(msg))
    env = {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "cpus": os.cpu_count(),
        "total_requests": cfg.total_requests,
        "batch_size": cfg.batch_size,
        "block_interval_ms": cfg.block_interval_ms,
        "block_capacity": cfg.block_capacity,
        "gateway": cfg.url or "in-process",
    }
    report = BenchReport(environment=env)
    if cfg.total_requests == 0 or not cfg.services:
        return report

    running = None
    tmp = None
    try:
        if cfg.url is None:
            tmp = tempfile.TemporaryDirectory(prefix="mdmchain-bench-")
            operator = Account.from_seed(f"{cfg.seed}/operator")
            ledger = Ledger(ChainConfig(block_interval_ms=cfg.block_interval_ms,
                                        block_capacity=cfg.block_capacity))
            running = start(Gateway(ledger, BlobStore(Path(tmp.name) / "store"), operator))
            url = running.url
        else:
            url = cfg.url
            needs_operator = {"token-generation", "token-verification"} & set(cfg.services)
            if needs_operator and not cfg.operator_keystore:
                raise ConfigError("bad-config", "token services against an external gateway need operator_keystore")
            operator = Keystore.load(cfg.operator_keystore).account if cfg.operator_keystore else Account.generate()
        with GatewayClient(url) as client:
            try:
                client.get("/health")
            except MdmError as exc:
                raise MdmError("gateway-unreachable", str(exc)) from None
            bench = _Bench(cfg, client, operator)
            say("seeding fixtures")
            bench.seed()
            for service in SERVICES:
                if service not in cfg.services:
                    continue
                calls = bench.prepare(service)
                say(f"running {service}")
                res = bench.drive(service, calls)
                say(f"{service}: {res.tps:.1f} tps, p50 {res.p50_ms:.1f} ms, errors {res.errors}")
                report.results[service] = res
    finally:
        if running is not None:
            running.stop()
        if tmp is not None:
            tmp.cleanup()
    return report
