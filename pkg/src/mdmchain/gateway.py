"""HTTP service layer over the ledger and the blob store.

Write endpoints take a transaction signed client-side and answer only after
it is sealed, so a client always reads its own writes. Read endpoints never
touch the transaction pool. The gateway itself signs only as the platform
operator (the service provider) when it grants access.

Endpoint map (the seven measured services are starred):

    * POST /dids                                  did.register
    * GET  /dids/{did}                            resolve
      GET  /dids/{did}/record                     owner / bound account
      PUT  /dids/{did}                            did.update_ddo
      POST /dids/{did}/revocation                 did.revoke
    * POST /agreements                            agreement.generate
      GET  /agreements/{id}
      POST /agreements/{id}/owner-signature       agreement.owner_sign
      POST /agreements/{id}/provider-signature    agreement.provider_sign
    * POST /multimedia                            multimedia.register (+ upload)
      GET  /multimedia/{id}
      GET  /multimedia/{id}/access-log
      POST /multimedia/{id}/approval              multimedia.approve
    * POST /multimedia/{id}/deregistration        multimedia.deregister
    * POST /access-requests                       token generation
    * POST /tokens/verify                         token verification
      POST /content/redeem                        verified download
      GET  /certificates/{cert_id}
      POST /blobs, GET /blobs/{hash}              off-chain documents
      POST /transactions, GET /transactions/{h}   generic submit / receipt
      GET  /accounts/{address}/nonce
      GET  /chain/tip, GET /chain/blocks/{h}, GET /chain/log, GET /health
"""

from __future__ import annotations

import base64
import binascii
import errno
import json
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.concurrency import run_in_threadpool

from .crypto import Account, address_of, canonical_bytes, hex_bytes, verify
from .errors import ConfigError, MdmError, NotFound, SubmitError
from .keystore import Keystore
from .ledger import ChainConfig, Ledger, Transaction
from .registries import Right
from .store import BlobStore, locator
from .tokens import AccessToken, generate_token, redeem, verify_token

log = logging.getLogger(__name__)

REQUEST_DOMAIN = b"mdmchain/request/v1\x00"
REQUEST_MAX_SKEW_MS = 5 * 60 * 1000

# the seven measured services -> the single operation each one runs
SERVICE_OPERATIONS = {
    "did-registration": "did.register",
    "did-resolution": "did.resolve",
    "agreement-generation": "agreement.generate",
    "multimedia-registration": "multimedia.register",
    "multimedia-deregistration": "multimedia.deregister",
    "token-generation": "certificates.issue_cert",
    "token-verification": "tokens.verify_token",
}

GrantPolicy = Callable[[dict, dict], "str | None"]


def request_signing_bytes(request: dict) -> bytes:
    return REQUEST_DOMAIN + canonical_bytes(request)


def sign_request(account: Account, request: dict) -> dict:
    """Envelope for endpoints authenticated by an account signature rather than a tx."""
    return {
        "request": request,
        "public_key": account.public_key.hex(),
        "signature": account.sign(request_signing_bytes(request)).hex(),
    }


def auto_grant(agreement: dict, request: dict) -> str | None:
    """Default provider policy: grant anything the agreement's copyrights cover.

    Returns None to grant, or a refusal code.
    """
    allowed = Right.parse(agreement["copyrights"])
    wanted = Right(request["rights"])
    if wanted & ~allowed:
        return "rights-not-licensed"
    if request["duration_ms"] > agreement["valid_time"] * 1000:
        return "duration-exceeds-agreement"
    return None


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8400
    chain: ChainConfig = field(default_factory=ChainConfig)
    store_path: Path = Path("mdm-store")
    operator_keystore: Path | None = None
    commit_timeout_s: float = 120.0

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("bad-config", f"{path}: {exc}") from None
        chain = raw.pop("chain", {})
        if "ledger_config" in raw:
            chain_cfg = ChainConfig.from_file(raw.pop("ledger_config"))
        else:
            try:
                chain_cfg = ChainConfig(**chain)
            except TypeError as exc:
                raise ConfigError("bad-config", str(exc)) from None
        try:
            cfg = cls(chain=chain_cfg, **raw)
        except TypeError as exc:
            raise ConfigError("bad-config", str(exc)) from None
        cfg.store_path = Path(cfg.store_path)
        if cfg.operator_keystore is not None:
            cfg.operator_keystore = Path(cfg.operator_keystore)
        return cfg


class ApiError(MdmError):
    def __init__(self, http_status: int, code: str, message: str = "", **extra: Any):
        super().__init__(code, message)
        self.http_status = http_status
        self.extra = extra


class Gateway:
    """The service layer: orchestration on top of ledger, store and token engine."""

    def __init__(
        self,
        ledger: Ledger,
        store: BlobStore,
        operator: Account | None = None,
        *,
        policy: GrantPolicy = auto_grant,
        commit_timeout_s: float = 120.0,
    ) -> None:
        self.ledger = ledger
        self.store = store
        self.operator = operator or Account.generate()
        self.policy = policy
        self.commit_timeout_s = commit_timeout_s
        self.delivery_notes: list[dict] = []
        self._seen_requests: set[tuple[str, str]] = set()
        self._seen_lock = threading.Lock()

    @classmethod
    def from_config(cls, cfg: GatewayConfig) -> "Gateway":
        operator = Keystore.load(cfg.operator_keystore).account if cfg.operator_keystore else None
        ledger = Ledger(cfg.chain)
        return cls(ledger, BlobStore(cfg.store_path), operator, commit_timeout_s=cfg.commit_timeout_s)

    # -- helpers

    def tip(self) -> int:
        return self.ledger.height

    def commit(self, tx_doc: Any, target: str, checks: dict | None = None) -> dict:
        """Submit a client-signed transaction for ``target`` and wait for its block."""
        try:
            tx = Transaction.from_dict(tx_doc)
        except (ValueError, TypeError) as exc:
            raise ApiError(400, "bad-transaction", str(exc)) from None
        if tx.target != target:
            raise ApiError(400, "wrong-endpoint", f"{tx.target} sent to the {target} endpoint")
        if checks:
            try:
                args = tx.args
            except json.JSONDecodeError:
                raise ApiError(400, "bad-transaction", "payload is not JSON") from None
            for k, v in checks.items():
                if not isinstance(args, dict) or args.get(k) != v:
                    raise ApiError(400, "path-mismatch", f"payload {k} does not match the URL")
        return self._wait(self._submit(tx))

    def _submit(self, tx: Transaction):
        try:
            return self.ledger.submit(tx)
        except SubmitError as exc:
            status = 503 if exc.code == "pool-full" else 400
            raise ApiError(status, exc.code, exc.message) from None

    def _wait(self, handle) -> dict:
        try:
            receipt = handle.wait(self.commit_timeout_s)
        except TimeoutError:
            raise ApiError(504, "commit-timeout", f"{handle.tx_hash} not sealed in time") from None
        body = receipt.to_dict()
        if not receipt.ok:
            raise ApiError(409, receipt.reason, f"transaction reverted: {receipt.reason}", **body)
        return body

    def read(self, registry: str, op: str, *params: Any) -> Any:
        try:
            return self.ledger.query(registry, op, *params)
        except NotFound as exc:
            raise ApiError(404, exc.code, exc.message, tip=self.tip()) from None

    # -- services

    def register_multimedia(self, tx_doc: Any, content_b64: str | None) -> dict:
        if content_b64 is not None:
            try:
                data = base64.b64decode(content_b64, validate=True)
            except (binascii.Error, TypeError, ValueError):
                raise ApiError(400, "bad-content", "content must be base64") from None
            try:
                claimed = json.loads(tx_doc["payload"])["content_hash"]
            except (TypeError, KeyError, ValueError):
                raise ApiError(400, "bad-transaction", "payload lacks content_hash") from None
            h = self.store.put(data, "multimedia-source")
            if h != claimed:
                raise ApiError(400, "content-hash-mismatch", "uploaded bytes do not hash to content_hash")
        return self.commit(tx_doc, "multimedia.register")

    def deregister_multimedia(self, mid: str, tx_doc: Any) -> dict:
        try:
            content_hash = self.ledger.query("multimedia", "get", mid)["content_hash"]
        except NotFound:
            content_hash = None
        body = self.commit(tx_doc, "multimedia.deregister", {"id": mid})
        if content_hash is not None:
            still_used = self.ledger.read_state(
                lambda w: any(r["content_hash"] == content_hash for r in w.multimedia.records.values())
            )
            if not still_used:
                try:
                    self.store.delete(content_hash)
                except NotFound:
                    pass
        return body

    def request_access(self, envelope: Any) -> dict:
        """End user asks for rights on a work; the operator grants per policy."""
        request, address = self._authenticate(envelope)
        enduser_did = request["enduser_did"]
        try:
            enduser = self.ledger.query("did", "record", enduser_did)
        except NotFound as exc:
            raise ApiError(403, "unknown-enduser", exc.message) from None
        if enduser["owner"] != address:
            raise ApiError(403, "not-enduser", "signer does not control the end-user DID")
        record = self.read("multimedia", "get", request["multimedia_id"])
        if not record["approved"]:
            raise ApiError(409, "not-approved", "multimedia is not approved")
        if record["provider_account"] != self.operator.address:
            raise ApiError(403, "not-operator-provider", "this gateway does not provide that work")
        agreements = [
            a for a in self.ledger.query("agreement", "settled_by_hash", record["agreement_hash"])
            if a["owner_did"] == record["owner_did"] and a["provider_did"] == record["provider_did"]
        ]
        refusals = [self.policy(a, request) for a in agreements] or ["agreement-not-settled"]
        if all(r is not None for r in refusals):
            raise ApiError(403, refusals[0], "provider policy refused the request")

        now = self.ledger.clock()
        try:
            token, cert = generate_token(
                self.ledger, self.operator, record["owner_did"], record["provider_did"], enduser_did,
                record["id"], request["rights"], (now, now + request["duration_ms"]),
                now=now, timeout=self.commit_timeout_s,
            )
        except TimeoutError:
            raise ApiError(504, "commit-timeout", "certificate not sealed in time") from None
        except MdmError as exc:
            raise ApiError(409, exc.code, exc.message) from None
        encoded = token.encode()
        copy_hash = self.store.put(encoded.encode(), "token-copy")
        contact = [s.get("serviceEndpoint") for s in json.loads(enduser["ddo"]).get("service", [])]
        note = {"cert_id": cert["id"], "enduser_did": enduser_did, "channel": "http-response",
                "copy": locator(copy_hash), "contact": contact}
        with self._seen_lock:
            self.delivery_notes.append(note)
        return {"token": encoded, "cert_id": cert["id"], "delivery": note,
                "status": "success", "height": self.ledger.height}

    def _authenticate(self, envelope: Any) -> tuple[dict, str]:
        try:
            raw = envelope["request"]
            pk = hex_bytes(envelope["public_key"], 32)
            sig = hex_bytes(envelope["signature"], 64)
            if not verify(pk, request_signing_bytes(raw), sig):
                raise ApiError(401, "bad-signature", "request signature does not verify")
            rights = raw["rights"]
            rights = Right.parse(rights) if isinstance(rights, (str, list)) else Right(rights)
            request = {
                "enduser_did": str(raw["enduser_did"]),
                "multimedia_id": str(raw["multimedia_id"]),
                "rights": int(rights.value),
                "duration_ms": int(raw["duration_ms"]),
                "nonce": str(raw["nonce"]),
                "issued_at": int(raw["issued_at"]),
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, "bad-request", f"malformed access request: {exc}") from None
        if not request["rights"]:
            raise ApiError(400, "empty-rights", "no rights requested")
        if request["duration_ms"] <= 0:
            raise ApiError(400, "expired-window", "duration must be positive")
        if abs(self.ledger.clock() - request["issued_at"]) > REQUEST_MAX_SKEW_MS:
            raise ApiError(401, "stale-request", "issued_at too far from server time")
        address = address_of(pk)
        with self._seen_lock:
            if (address, request["nonce"]) in self._seen_requests:
                raise ApiError(409, "replayed-request", "request nonce already used")
            self._seen_requests.add((address, request["nonce"]))
        return request, address

    def verify(self, body: bytes, now: int | None = None) -> dict:
        now = self.ledger.clock() if now is None else now
        try:
            token = json.loads(body)["token"]
        except (ValueError, TypeError, KeyError):
            token = None
        report = verify_token(self.ledger, token if isinstance(token, str) else "", now)
        out = report.to_dict()
        if token is None:
            out["steps"][0]["detail"] = "request body has no token"
        out["tip"] = self.tip()
        return out


def create_app(gw: Gateway) -> FastAPI:
    app = FastAPI(title="mdmchain gateway", version="1")
    app.state.gateway = gw

    @app.exception_handler(ApiError)
    def _api_error(request: Request, exc: ApiError):
        return JSONResponse({**exc.to_dict(), **exc.extra}, status_code=exc.http_status)

    @app.exception_handler(MdmError)
    def _mdm_error(request: Request, exc: MdmError):
        return JSONResponse(exc.to_dict(), status_code=400)

    async def body_json(request: Request) -> Any:
        raw = await request.body()
        try:
            return json.loads(raw)
        except ValueError:
            raise ApiError(400, "bad-request", "body is not JSON") from None

    def tx_of(body: Any) -> Any:
        if not isinstance(body, dict) or "tx" not in body:
            raise ApiError(400, "bad-request", "expected {\"tx\": {...}}")
        return body["tx"]

    # -- chain / plumbing

    @app.get("/health")
    def health():
        return {"status": "ok", "tip": gw.tip(), "operator": gw.operator.address}

    @app.get("/chain/tip")
    def chain_tip():
        tip = gw.ledger.tip
        return {**tip.header(), "block_hash": tip.block_hash, "tip": tip.height,
                "tx_count": gw.ledger.tx_count, "pending": gw.ledger.pending}

    @app.get("/chain/blocks/{height}")
    def chain_block(height: int):
        if not 0 <= height <= gw.tip():
            raise ApiError(404, "not-found", f"no block {height}", tip=gw.tip())
        return gw.ledger.blocks[height].to_dict()

    @app.get("/chain/log")
    def chain_log():
        return {"tip": gw.tip(), "state_root": gw.ledger.state_root().hex(),
                "transactions": [t.to_dict() for t in gw.ledger.export_log()]}

    @app.get("/accounts/{address}/nonce")
    def next_nonce(address: str):
        return {"address": address, "next_nonce": gw.ledger.next_nonce(address), "tip": gw.tip()}

    @app.post("/transactions")
    async def submit_tx(request: Request, wait: bool = True):
        tx_doc = tx_of(await body_json(request))
        try:
            tx = Transaction.from_dict(tx_doc)
        except (ValueError, TypeError) as exc:
            raise ApiError(400, "bad-transaction", str(exc)) from None
        if not wait:
            handle = gw._submit(tx)
            return JSONResponse({"tx_hash": handle.tx_hash, "status": "pending"}, status_code=202)
        return await _threaded(gw.commit, tx_doc, tx.target)

    @app.get("/transactions/{tx_hash}")
    def tx_receipt(tx_hash: str):
        r = gw.ledger.receipt(tx_hash)
        if r is None:
            raise ApiError(404, "not-found", "unknown or pending transaction", tip=gw.tip())
        return {**r.to_dict(), "tip": gw.tip()}

    # -- DIDs

    @app.post("/dids")
    async def did_register(request: Request):
        return await _threaded(gw.commit, tx_of(await body_json(request)), "did.register")

    @app.get("/dids/{did}")
    def did_resolve(did: str):
        return {"did": did, "ddo": gw.read("did", "resolve", did), "tip": gw.tip()}

    @app.get("/dids/{did}/record")
    def did_record(did: str):
        return {"record": gw.read("did", "record", did), "tip": gw.tip()}

    @app.put("/dids/{did}")
    async def did_update(did: str, request: Request):
        return await _threaded(gw.commit, tx_of(await body_json(request)), "did.update_ddo", {"did": did})

    @app.post("/dids/{did}/revocation")
    async def did_revoke(did: str, request: Request):
        return await _threaded(gw.commit, tx_of(await body_json(request)), "did.revoke", {"did": did})

    # -- agreements

    @app.post("/agreements")
    async def agreement_generate(request: Request):
        return await _threaded(gw.commit, tx_of(await body_json(request)), "agreement.generate")

    @app.get("/agreements/{aid}")
    def agreement_get(aid: str):
        return {"agreement": gw.read("agreement", "get", aid), "tip": gw.tip()}

    @app.post("/agreements/{aid}/owner-signature")
    async def agreement_owner_sign(aid: str, request: Request):
        return await _threaded(gw.commit, tx_of(await body_json(request)), "agreement.owner_sign", {"id": aid})

    @app.post("/agreements/{aid}/provider-signature")
    async def agreement_provider_sign(aid: str, request: Request):
        return await _threaded(gw.commit, tx_of(await body_json(request)), "agreement.provider_sign", {"id": aid})

    # -- multimedia

    @app.post("/multimedia")
    async def multimedia_register(request: Request):
        body = await body_json(request)
        return await _threaded(gw.register_multimedia, tx_of(body), body.get("content"))

    @app.get("/multimedia/{mid}")
    def multimedia_get(mid: str):
        return {"multimedia": gw.read("multimedia", "get", mid), "tip": gw.tip()}

    @app.get("/multimedia/{mid}/access-log")
    def multimedia_access_log(mid: str):
        return {"id": mid, "access_info": gw.read("multimedia", "access_log", mid), "tip": gw.tip()}

    @app.post("/multimedia/{mid}/approval")
    async def multimedia_approve(mid: str, request: Request):
        return await _threaded(gw.commit, tx_of(await body_json(request)), "multimedia.approve", {"id": mid})

    @app.post("/multimedia/{mid}/deregistration")
    async def multimedia_deregister(mid: str, request: Request):
        return await _threaded(gw.deregister_multimedia, mid, tx_of(await body_json(request)))

    # -- access

    @app.post("/access-requests")
    async def access_request(request: Request):
        return await _threaded(gw.request_access, await body_json(request))

    @app.post("/tokens/verify")
    async def token_verify(request: Request):
        return gw.verify(await request.body())

    @app.post("/content/redeem")
    async def content_redeem(request: Request):
        body = await body_json(request)
        token = body.get("token") if isinstance(body, dict) else None
        if not isinstance(token, str):
            raise ApiError(400, "bad-request", "expected {\"token\": ...}")
        try:
            data = redeem(gw.ledger, gw.store, token, gw.ledger.clock())
        except MdmError as exc:
            status = {"verification-failed": 403, "content-missing": 404, "content-integrity": 502}.get(exc.code, 400)
            return JSONResponse(exc.to_dict(), status_code=status)
        cert_id = AccessToken.decode(token).cert_id
        return Response(data, media_type="application/octet-stream",
                        headers={"X-Cert-Id": cert_id, "X-Tip": str(gw.tip())})

    @app.get("/certificates/{cert_id}")
    def certificate_get(cert_id: str):
        return {"certificate": gw.read("certificates", "get", cert_id), "tip": gw.tip()}

    # -- off-chain documents

    @app.post("/blobs")
    async def blob_put(request: Request, kind: str = "agreement-document"):
        h = gw.store.put(await request.body(), kind)
        return {"content_hash": h, "locator": locator(h)}

    @app.get("/blobs/{content_hash}")
    def blob_get(content_hash: str):
        try:
            return Response(gw.store.get(content_hash), media_type="application/octet-stream")
        except NotFound as exc:
            raise ApiError(404, exc.code, exc.message) from None

    return app


async def _threaded(fn, *args):
    """Run a blocking service call off the event loop."""
    return await run_in_threadpool(fn, *args)


class RunningGateway:
    """A gateway served from a background thread (tests, bench, embedding)."""

    def __init__(self, gw: Gateway, server: uvicorn.Server, thread: threading.Thread, port: int, host: str):
        self.gateway = gw
        self.server = server
        self.thread = thread
        self.port = port
        self.url = f"http://{host}:{port}"

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)
        self.gateway.ledger.close()

    def __enter__(self) -> "RunningGateway":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def _bind(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        if exc.errno == errno.EADDRINUSE:
            raise MdmError("port-in-use", f"{host}:{port} is already in use") from None
        raise
    sock.listen(2048)
    return sock


def start(gw: Gateway, host: str = "127.0.0.1", port: int = 0) -> RunningGateway:
    sock = _bind(host, port)
    config = uvicorn.Config(create_app(gw), log_level="warning", access_log=False,
                            timeout_keep_alive=30, backlog=2048)
    server = uvicorn.Server(config)
    gw.ledger.start()
    thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]}, daemon=True,
                              name="gateway-http")
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline or not thread.is_alive():
            raise MdmError("gateway-start-failed", "HTTP server did not start")
        time.sleep(0.01)
    return RunningGateway(gw, server, thread, sock.getsockname()[1], host)


def serve(cfg: GatewayConfig) -> None:
    """Run in the foreground until interrupted."""
    gw = Gateway.from_config(cfg)
    sock = _bind(cfg.host, cfg.port)
    gw.ledger.start()
    log.info("gateway on %s:%d, operator %s", cfg.host, cfg.port, gw.operator.address)
    try:
        uvicorn.Server(uvicorn.Config(create_app(gw), log_level="info")).run(sockets=[sock])
    finally:
        gw.ledger.close()
