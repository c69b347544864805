"""Access tokens: generation under the provider's key and six-step verification.

A token carries only the certificate id, provider DID, provider signature
and validity window. Everything else needed to check it is looked up
on-chain by certificate id.

Wire format, three base64url segments joined by dots::

    header  {"alg":"Ed25519","typ":"mdm-access","v":1}
    payload {"cert":<hex cert id>,"exp":<ms>,"nbf":<ms>,"pro":<provider DID>}
    sig     raw 64-byte provider signature over the canonical OnchainInfo

JSON segments are canonical (sorted keys, no whitespace). Decoding is
strict: any input that does not re-encode to itself is rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .crypto import (
    Account,
    b64url_decode,
    b64url_encode,
    canonical_bytes,
    hex_bytes,
    sha256_hex,
)
from .errors import ContentIntegrityError, MdmError, NotFound, Revert, VerificationFailed
from .ledger import Ledger
from .registries import OnchainInfo, Right, verify_with_ddo
from .registries.did import is_did
from .store import BlobStore, parse_locator

HEADER = {"alg": "Ed25519", "typ": "mdm-access", "v": 1}
_HEADER_SEGMENT = b64url_encode(canonical_bytes(HEADER))

STEPS = (
    "decode",
    "temporal-validity",
    "certificate-lookup",
    "provider-signature-match",
    "provider-signature-verify",
    "owner-signature-verify",
)


class TokenFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AccessToken:
    cert_id: str
    provider_did: str
    provider_sig: bytes
    not_before: int
    not_after: int

    def encode(self) -> str:
        payload = {"cert": self.cert_id, "exp": self.not_after, "nbf": self.not_before, "pro": self.provider_did}
        return ".".join(
            (_HEADER_SEGMENT, b64url_encode(canonical_bytes(payload)), b64url_encode(self.provider_sig))
        )

    @classmethod
    def decode(cls, text: str) -> "AccessToken":
        if not isinstance(text, str):
            raise TokenFormatError("token must be text")
        parts = text.split(".")
        if len(parts) != 3:
            raise TokenFormatError("expected three segments")
        if parts[0] != _HEADER_SEGMENT:
            raise TokenFormatError("unsupported header")
        try:
            raw = b64url_decode(parts[1])
            payload = json.loads(raw.decode("utf-8"))
            sig = b64url_decode(parts[2])
        except (ValueError, UnicodeDecodeError) as exc:
            raise TokenFormatError(str(exc)) from None
        if not isinstance(payload, dict) or set(payload) != {"cert", "exp", "nbf", "pro"}:
            raise TokenFormatError("payload fields")
        if canonical_bytes(payload) != raw:
            raise TokenFormatError("payload is not canonical")
        for k in ("nbf", "exp"):
            v = payload[k]
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < 2**63:
                raise TokenFormatError(f"{k} must be an unsigned integer")
        if not is_did(payload["pro"]):
            raise TokenFormatError("provider is not a DID")
        try:
            hex_bytes(payload["cert"], 32)
        except (ValueError, TypeError):
            raise TokenFormatError("cert id must be 32 bytes of hex") from None
        if len(sig) != 64:
            raise TokenFormatError("signature length")
        return cls(payload["cert"], payload["pro"], sig, payload["nbf"], payload["exp"])


@dataclass
class StepResult:
    step: int
    name: str
    outcome: str  # pass | fail | skipped
    detail: str = ""

    def to_dict(self) -> dict:
        return {"step": self.step, "name": self.name, "outcome": self.outcome, "detail": self.detail}


@dataclass
class VerificationReport:
    steps: list[StepResult] = field(default_factory=list)
    token: AccessToken | None = None
    certificate: dict | None = None

    @property
    def accepted(self) -> bool:
        return len(self.steps) == len(STEPS) and all(s.outcome == "pass" for s in self.steps)

    @property
    def failed_step(self) -> int | None:
        for s in self.steps:
            if s.outcome == "fail":
                return s.step
        return None

    @property
    def outcome(self) -> str:
        return "accept" if self.accepted else "reject"

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "failed_step": self.failed_step,
            "failed_step_name": STEPS[self.failed_step - 1] if self.failed_step else None,
            "steps": [s.to_dict() for s in self.steps],
        }


@dataclass(frozen=True)
class AccessGrant:
    """Everything produced while granting access, before anything goes on-chain."""

    info: OnchainInfo
    token: AccessToken
    issue_args: dict

    @property
    def cert_id(self) -> str:
        return self.token.cert_id


def build_grant(
    provider: Account,
    provider_did: str,
    enduser_did: str,
    record: dict,
    rights: Right | int,
    not_before: int,
    not_after: int,
) -> AccessGrant:
    """Combine, hash and sign the on-chain info for one access grant."""
    rights = int(Right(rights).value) if isinstance(rights, Right) else int(rights)
    info = OnchainInfo(
        owner_did=record["owner_did"],
        provider_did=provider_did,
        enduser_did=enduser_did,
        multimedia_id=record["id"],
        access_rights=rights,
        not_before=not_before,
        not_after=not_after,
        owner_sig=bytes.fromhex(record["owner_sig"]),
    )
    cert_id = info.cert_id()
    sig = provider.sign(info.canonical())
    token = AccessToken(cert_id, provider_did, sig, not_before, not_after)
    args = {
        "cert_id": cert_id,
        "multimedia_id": info.multimedia_id,
        "provider_did": provider_did,
        "enduser_did": enduser_did,
        "owner_sig": record["owner_sig"],
        "access_rights": rights,
        "not_before": not_before,
        "not_after": not_after,
        "provider_sig": sig.hex(),
    }
    return AccessGrant(info, token, args)


def generate_token(
    ledger: Ledger,
    provider: Account,
    owner_did: str,
    provider_did: str,
    enduser_did: str,
    multimedia_id: str,
    rights: Right | int,
    valid_time: tuple[int, int],
    *,
    now: int | None = None,
    timeout: float | None = 60.0,
) -> tuple[AccessToken, dict]:
    """Issue a certificate on-chain and return the token plus the stored certificate.

    Blocks until the issuing transaction is sealed.
    """
    now = ledger.clock() if now is None else now
    not_before, not_after = valid_time
    rights_value = int(Right(rights).value) if isinstance(rights, Right) else int(rights)

    def check(world):
        rec = world.multimedia.live(multimedia_id)
        if rec is None:
            raise MdmError("not-found", f"multimedia {multimedia_id} not found")
        if not rec["approved"]:
            raise MdmError("not-approved", f"multimedia {multimedia_id} is not approved")
        if rec["owner_did"] != owner_did or rec["provider_did"] != provider_did:
            raise MdmError("party-mismatch", "owner/provider DIDs do not match the record")
        if world.did.live(enduser_did) is None:
            raise MdmError("unknown-enduser", enduser_did)
        return dict(rec)

    record = ledger.read_state(check)
    if not 0 < rights_value < 64:
        raise MdmError("empty-rights", "at least one access right is required")
    if not_after <= now or not_after <= not_before:
        raise MdmError("expired-window", "validity window is already over or empty")

    grant = build_grant(provider, provider_did, enduser_did, record, rights_value, not_before, not_after)
    receipt = ledger.transact(provider, "certificates", "issue_cert", grant.issue_args).wait(timeout)
    if not receipt.ok:
        raise Revert(receipt.reason, f"issue_cert reverted: {receipt.reason}")
    return grant.token, ledger.query("certificates", "get", grant.cert_id)


def verify_token(ledger: Ledger, token: str | AccessToken, now: int) -> VerificationReport:
    """Run the six verification steps against one committed snapshot.

    Never raises on hostile input; failures show up in the report.
    """
    report = VerificationReport()

    def done(step: int, ok: bool, detail: str = "") -> bool:
        report.steps.append(StepResult(step, STEPS[step - 1], "pass" if ok else "fail", detail))
        if not ok:
            for s in range(step + 1, len(STEPS) + 1):
                report.steps.append(StepResult(s, STEPS[s - 1], "skipped"))
        return ok

    if isinstance(token, AccessToken):
        tok = token
    else:
        try:
            tok = AccessToken.decode(token)
        except TokenFormatError as exc:
            done(1, False, str(exc))
            return report
    report.token = tok
    done(1, True)

    if not done(2, tok.not_before <= now < tok.not_after,
                f"now={now} window=[{tok.not_before},{tok.not_after})"):
        return report

    def onchain(world) -> None:
        cert = world.certificates.certs.get(tok.cert_id)
        if not done(3, cert is not None, "" if cert else "no certificate with this id"):
            return
        report.certificate = dict(cert)
        same = (
            cert["provider_sig"] == tok.provider_sig.hex()
            and cert["provider_did"] == tok.provider_did
            and cert["not_before"] == tok.not_before
            and cert["not_after"] == tok.not_after
        )
        if not done(4, same, "" if same else "token fields differ from the on-chain certificate"):
            return

        info = OnchainInfo.from_certificate(cert)
        provider = world.did.live(cert["provider_did"])
        if provider is None:
            done(5, False, f"cannot resolve provider {cert['provider_did']}")
            return
        if info.cert_id() != tok.cert_id:
            done(5, False, "certificate id does not hash the on-chain info")
            return
        if not done(5, verify_with_ddo(provider["ddo"], info.canonical(), tok.provider_sig),
                    "provider signature invalid"):
            return

        owner = world.did.live(cert["owner_did"])
        if owner is None:
            done(6, False, f"cannot resolve owner {cert['owner_did']}")
            return
        done(6, verify_with_ddo(owner["ddo"], bytes.fromhex(cert["content_hash"]), info.owner_sig),
             "owner signature invalid")

    ledger.read_state(onchain)
    return report


def redeem(ledger: Ledger, store: BlobStore, token: str | AccessToken, now: int) -> bytes:
    """Verify the token, fetch the work's bytes and check them against the on-chain hash."""
    report = verify_token(ledger, token, now)
    if not report.accepted:
        raise VerificationFailed(report)
    cert = report.certificate
    assert cert is not None
    try:
        record = ledger.query("multimedia", "get", cert["multimedia_id"])
        data = store.get(parse_locator(record["upload_ref"]))
    except NotFound:
        raise MdmError("content-missing", f"content for {cert['multimedia_id']} is gone") from None
    if sha256_hex(data) != record["content_hash"]:
        raise ContentIntegrityError("content-integrity", "stored bytes do not match the on-chain content hash")
    return data
