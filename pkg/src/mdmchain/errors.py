"""Exception hierarchy.

Every error carries a short machine-readable ``code`` (e.g. ``"not-owner"``)
which is what travels over HTTP and out of the CLI.
"""

from __future__ import annotations


class MdmError(Exception):
    code = "error"

    def __init__(self, code: str | None = None, message: str = ""):
        if code is not None:
            self.code = code
        super().__init__(message or self.code)
        self.message = message or self.code

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message}


class Revert(MdmError):
    """A registry precondition failed; the transaction is a state no-op."""

    code = "revert"


class SubmitError(MdmError):
    """Transaction refused at the pool door (bad-signature, stale-nonce, pool-full)."""


class NotFound(MdmError):
    code = "not-found"


class UnknownRegistry(MdmError):
    code = "unknown-registry"


class CorruptLog(MdmError):
    code = "corrupt-log"


class StoreError(MdmError):
    pass


class ContentIntegrityError(MdmError):
    code = "content-integrity"


class VerificationFailed(MdmError):
    code = "verification-failed"

    def __init__(self, report, message: str = ""):
        self.report = report
        step = report.failed_step
        super().__init__("verification-failed", message or f"token rejected at step {step}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["step"] = self.report.failed_step
        d["report"] = self.report.to_dict()
        return d


class ConfigError(MdmError):
    code = "bad-config"
