"""Shared fixtures-as-code: a three-party world on an in-process ledger."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from mdmchain.crypto import Account, sha256_hex
from mdmchain.ledger import ChainConfig, Ledger, Receipt
from mdmchain.registries import Right, agreement_signing_payload, make_ddo
from mdmchain.store import locator
from mdmchain.tokens import generate_token

CONTENT = b"\x00\x01 a short test clip \xff" * 8
AGREEMENT_DOC = b"license terms: performance and publication, one year"
AGREEMENT_HASH = sha256_hex(AGREEMENT_DOC)
YEAR_S = 365 * 86400


def now_ms() -> int:
    return time.time_ns() // 1_000_000


def fast_ledger(interval_ms: int = 5, **kw) -> Ledger:
    return Ledger(ChainConfig(block_interval_ms=interval_ms, **kw)).start()


@dataclass
class Parties:
    """Owner, provider and end user, each with one key and one DID."""

    ledger: Ledger
    owner: Account = field(default_factory=lambda: Account.from_seed("owner"))
    provider: Account = field(default_factory=lambda: Account.from_seed("provider"))
    enduser: Account = field(default_factory=lambda: Account.from_seed("enduser"))

    @property
    def accounts(self) -> dict[str, Account]:
        return {"owner": self.owner, "provider": self.provider, "enduser": self.enduser}

    def tx(self, account: Account, registry: str, op: str, args: dict) -> Receipt:
        return self.ledger.transact(account, registry, op, args).wait(10)

    def ok(self, account: Account, registry: str, op: str, args: dict) -> Receipt:
        r = self.tx(account, registry, op, args)
        assert r.ok, f"{registry}.{op} reverted: {r.reason}"
        return r

    # -- steps

    def register_did(self, account: Account, did: str | None = None) -> Receipt:
        did = did or account.did
        return self.tx(account, "did", "register",
                       {"bound_account": account.address, "did": did, "ddo": make_ddo(did, account.public_key)})

    def register_dids(self) -> None:
        for acct in self.accounts.values():
            r = self.register_did(acct)
            assert r.ok, r.reason

    def media_args(self, mid: str, data: bytes = CONTENT, signer: Account | None = None) -> dict:
        h = sha256_hex(data)
        signer = signer or self.owner
        return {"id": mid, "owner_did": self.owner.did, "content_hash": h,
                "owner_sig": signer.sign(bytes.fromhex(h)).hex(), "upload_ref": locator(h)}

    def register_media(self, mid: str, data: bytes = CONTENT) -> Receipt:
        return self.tx(self.owner, "multimedia", "register", self.media_args(mid, data))

    def agreement_args(self, aid: str, ahash: str = AGREEMENT_HASH,
                       rights: Right = Right.PERFORMANCE | Right.PUBLICATION, valid_time: int = YEAR_S) -> dict:
        return {"id": aid, "owner_did": self.owner.did, "owner_account": self.owner.address,
                "provider_did": self.provider.did, "agreement_hash": ahash,
                "valid_time": valid_time, "copyrights": rights.text()}

    def sign_args(self, aid: str, signer: Account) -> dict:
        ag = self.ledger.query("agreement", "get", aid)
        payload = agreement_signing_payload(ag["id"], ag["owner_did"], ag["provider_did"],
                                            ag["agreement_hash"], ag["valid_time"], ag["copyrights"])
        return {"id": aid, "sig": signer.sign(payload).hex()}

    def settle(self, aid: str, ahash: str = AGREEMENT_HASH, **kw) -> None:
        self.ok(self.provider, "agreement", "generate", self.agreement_args(aid, ahash, **kw))
        self.ok(self.owner, "agreement", "owner_sign", self.sign_args(aid, self.owner))
        self.ok(self.provider, "agreement", "provider_sign", self.sign_args(aid, self.provider))

    def approve_args(self, mid: str, ahash: str = AGREEMENT_HASH) -> dict:
        return {"id": mid, "provider_did": self.provider.did, "agreement_hash": ahash}

    def approved_media(self, mid: str = "clip-1", aid: str = "ag-1", data: bytes = CONTENT) -> None:
        """Register DIDs (if needed), the work, a settled agreement, and approve."""
        if not self.ledger.query("did", "exists", self.owner.did):
            self.register_dids()
        assert self.register_media(mid, data).ok
        if not self.ledger.query("agreement", "settled_by_hash", AGREEMENT_HASH):
            self.settle(aid)
        self.ok(self.provider, "multimedia", "approve", self.approve_args(mid))

    def issue(self, mid: str = "clip-1", rights: Right | int = Right.PERFORMANCE,
              window: tuple[int, int] | None = None, enduser_did: str | None = None):
        start = now_ms()
        window = window or (start, start + 3_600_000)
        return generate_token(self.ledger, self.provider, self.owner.did, self.provider.did,
                              enduser_did or self.enduser.did, mid, rights, window, timeout=10)


# -- over HTTP


def start_gateway(tmp_path, interval_ms: int = 5, operator: Account | None = None, **chain_kw):
    from mdmchain.gateway import Gateway, start
    from mdmchain.store import BlobStore

    ledger = Ledger(ChainConfig(block_interval_ms=interval_ms, **chain_kw)).start()
    gw = Gateway(ledger, BlobStore(tmp_path / "store"), operator or Account.from_seed("provider"),
                 commit_timeout_s=30)
    return start(gw)


def http_lifecycle(client, owner: Account, provider: Account, enduser: Account,
                   content: bytes = CONTENT, mid: str = "clip-1", aid: str = "ag-1") -> dict:
    """Every step of the flow through the REST API; returns what was produced."""
    for acct in (owner, provider, enduser):
        client.register_did(acct)
    reg = client.register_multimedia(owner, mid, content)
    ahash = client.put_blob(AGREEMENT_DOC, "agreement-document")
    rights = Right.PERFORMANCE | Right.PUBLICATION
    client.generate_agreement(provider, aid, owner.did, owner.address, provider.did, ahash, YEAR_S, rights)
    client.sign_agreement(owner, aid, "owner")
    client.sign_agreement(provider, aid, "provider")
    client.approve(provider, mid, provider.did, ahash)
    grant = client.request_access(enduser, mid, Right.PERFORMANCE, 600_000)
    report = client.verify_token(grant["token"])
    data = client.redeem(grant["token"])
    return {"content_hash": reg["content_hash"], "agreement_hash": ahash, "grant": grant,
            "report": report, "data": data, "cert": client.certificate(grant["cert_id"])}


# -- acceptance reporting

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def criterion(number: int, title: str):
    """Record the pass/fail outcome of an acceptance test for the summary."""
    import functools

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE[number] = (title, False, f"{type(exc).__name__}: {exc}".splitlines()[0][:200])
                raise
            ACCEPTANCE[number] = (title, True, detail or "")
        return run

    return wrap
