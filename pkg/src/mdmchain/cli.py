"""Command-line client for owners, providers and end users.

Every subcommand prints ``key: value`` lines, or one JSON object with
``--json``. Failures exit with status 1 and print a JSON error object on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .crypto import sha256_hex
from .errors import MdmError
from .keystore import Keystore, keystore_path
from .registries import Right, make_ddo

DEFAULT_GATEWAY = "http://127.0.0.1:8400"


def _client(args):
    from .client import GatewayClient

    return GatewayClient(args.gateway)


def _keys(args, name: str | None = None) -> Keystore:
    return Keystore.load(keystore_path(args.keystore_dir, name or args.name))


def _out(args, data: dict) -> None:
    if args.json:
        print(json.dumps(data, sort_keys=True))
    else:
        for k, v in data.items():
            print(f"{k}: {v}")


def _rights(text: str) -> Right:
    try:
        r = Right.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not r:
        raise argparse.ArgumentTypeError("at least one right is required")
    return r


# -- subcommands


def cmd_keygen(args) -> dict:
    path = keystore_path(args.keystore_dir, args.name)
    if path.exists() and not args.force:
        raise MdmError("keystore-exists", f"{path} exists (use --force to overwrite)")
    ks = Keystore.create(args.name)
    if args.did:
        ks.did = args.did
    ks.save(path)
    return {"keystore": str(path), "address": ks.account.address, "did": ks.did}


def cmd_did_register(args) -> dict:
    ks = _keys(args)
    with _client(args) as c:
        r = c.register_did(ks.account, ks.did, endpoint=args.endpoint)
    return {"did": ks.did, "height": r["height"], "tx_hash": r["tx_hash"]}


def cmd_did_resolve(args) -> dict:
    with _client(args) as c:
        ddo = c.resolve_did(args.did)
    return {"did": args.did, "ddo": ddo}


def cmd_did_update(args) -> dict:
    ks = _keys(args)
    ddo = Path(args.ddo_file).read_text().strip() if args.ddo_file else make_ddo(
        ks.did, ks.account.public_key, args.endpoint)
    with _client(args) as c:
        r = c.update_ddo(ks.account, ks.did, ddo)
    return {"did": ks.did, "height": r["height"], "tx_hash": r["tx_hash"]}


def cmd_did_revoke(args) -> dict:
    ks = _keys(args)
    with _client(args) as c:
        r = c.revoke_did(ks.account, ks.did)
    return {"did": ks.did, "revoked": True, "height": r["height"]}


def cmd_media_register(args) -> dict:
    ks = _keys(args)
    data = Path(args.file).read_bytes()
    with _client(args) as c:
        r = c.register_multimedia(ks.account, args.id, data, ks.did, upload=not args.no_upload)
    return {"id": args.id, "content_hash": r["content_hash"], "height": r["height"]}


def cmd_agreement_generate(args) -> dict:
    ks = _keys(args)
    with _client(args) as c:
        if args.agreement_file:
            ahash = c.put_blob(Path(args.agreement_file).read_bytes(), "agreement-document")
        else:
            ahash = args.agreement_hash
        owner_account = args.owner_account or c.did_record(args.owner_did)["owner"]
        r = c.generate_agreement(ks.account, args.id, args.owner_did, owner_account, ks.did,
                                 ahash, args.valid_time, args.copyrights)
    return {"id": args.id, "agreement_hash": ahash, "height": r["height"]}


def cmd_agreement_sign(args) -> dict:
    ks = _keys(args)
    with _client(args) as c:
        c.sign_agreement(ks.account, args.id, args.party)
        ag = c.get_agreement(args.id)
    return {"id": args.id, "party": args.party, "settled": ag["settled"]}


def cmd_media_approve(args) -> dict:
    ks = _keys(args)
    with _client(args) as c:
        r = c.approve(ks.account, args.id, ks.did, args.agreement_hash)
    return {"id": args.id, "approved": True, "height": r["height"]}


def cmd_access_request(args) -> dict:
    ks = _keys(args)
    with _client(args) as c:
        r = c.request_access(ks.account, args.id, args.rights, args.duration_ms, ks.did)
    if args.out:
        Path(args.out).write_text(r["token"] + "\n")
    return {"cert_id": r["cert_id"], "token": r["token"]}


def _token_arg(args) -> str:
    if args.token_file:
        return Path(args.token_file).read_text().strip()
    if args.token:
        return args.token
    raise MdmError("bad-args", "give a token or --token-file")


def cmd_token_verify(args) -> dict:
    with _client(args) as c:
        report = c.verify_token(_token_arg(args))
    if report["outcome"] != "accept":
        err = MdmError("token-rejected", f"rejected at step {report['failed_step']} ({report['failed_step_name']})")
        err.extra = {"step": report["failed_step"], "step_name": report["failed_step_name"], "report": report}
        raise err
    return {"outcome": "accept", "steps": len(report["steps"])}


def cmd_redeem(args) -> dict:
    from .tokens import AccessToken

    token = _token_arg(args)
    with _client(args) as c:
        data = c.redeem(token)
        cert = c.certificate(AccessToken.decode(token).cert_id)
    got = sha256_hex(data)
    if got != cert["content_hash"]:
        raise MdmError("content-integrity", f"received {got}, on-chain {cert['content_hash']}")
    Path(args.out).write_bytes(data)
    return {"saved": args.out, "content_hash": got, "onchain_hash": cert["content_hash"], "bytes": len(data)}


def cmd_serve(args) -> dict:
    from .gateway import GatewayConfig, serve
    from .ledger import ChainConfig

    if args.config:
        cfg = GatewayConfig.from_file(args.config)
    else:
        chain = ChainConfig(block_interval_ms=args.block_interval_ms, block_capacity=args.block_capacity,
                            data_dir=args.data_dir)
        cfg = GatewayConfig(host=args.host, port=args.port, chain=chain, store_path=Path(args.store),
                            operator_keystore=Path(args.operator_keystore) if args.operator_keystore else None)
    serve(cfg)
    return {}


def cmd_bench(args) -> dict:
    from .bench import BenchConfig, emit_csv, run_bench

    if args.config:
        cfg = BenchConfig.from_file(args.config)
    else:
        kw = dict(total_requests=args.total_requests, batch_size=args.batch_size,
                  block_interval_ms=args.block_interval_ms, block_capacity=args.block_capacity,
                  url=args.url, operator_keystore=args.operator_keystore)
        if args.services:
            kw["services"] = tuple(args.services.split(","))
        cfg = BenchConfig(**kw)
    report = run_bench(cfg, progress=lambda m: print(m, file=sys.stderr))
    if args.csv:
        emit_csv(report, args.csv)
    out = {name: f"{r.tps:.1f} tps p50={r.p50_ms:.1f}ms p95={r.p95_ms:.1f}ms errors={r.errors}"
           for name, r in report.results.items()}
    return report.to_dict() if args.json else out


def cmd_chain_export(args) -> dict:
    with _client(args) as c:
        doc = c.chain_log()
    Path(args.out).write_text(json.dumps(doc["transactions"]) + "\n")
    return {"transactions": len(doc["transactions"]), "state_root": doc["state_root"], "out": args.out}


def cmd_replay(args) -> dict:
    from .ledger import replay

    log = json.loads(Path(args.log).read_text())
    return {"transactions": len(log), "state_root": replay(log).hex()}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdmchain", description=__doc__.splitlines()[0])
    p.add_argument("--gateway", default=os.environ.get("MDMCHAIN_GATEWAY", DEFAULT_GATEWAY))
    p.add_argument("--keystore-dir", default=os.environ.get("MDMCHAIN_KEYSTORE", "keys"))
    p.add_argument("--json", action="store_true", help="structured output")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        return sp

    def named(sp):
        sp.add_argument("--name", required=True, help="keystore name")
        return sp

    sp = named(cmd("keygen", cmd_keygen, "create a local key file"))
    sp.add_argument("--did", help="DID to bind (default: did:mdm:<address>)")
    sp.add_argument("--force", action="store_true")

    sp = named(cmd("did-register", cmd_did_register, "register the keystore's DID"))
    sp.add_argument("--endpoint", help="contact service endpoint for the DDO")

    sp = cmd("did-resolve", cmd_did_resolve, "print a DID document")
    sp.add_argument("did")

    sp = named(cmd("did-update", cmd_did_update, "replace the DID document"))
    sp.add_argument("--endpoint")
    sp.add_argument("--ddo-file")

    named(cmd("did-revoke", cmd_did_revoke, "revoke the keystore's DID"))

    sp = named(cmd("media-register", cmd_media_register, "hash, sign and upload a work"))
    sp.add_argument("--id", required=True)
    sp.add_argument("file")
    sp.add_argument("--no-upload", action="store_true")

    sp = named(cmd("agreement-generate", cmd_agreement_generate, "draft agreement terms (provider)"))
    sp.add_argument("--id", required=True)
    sp.add_argument("--owner-did", required=True)
    sp.add_argument("--owner-account")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--agreement-file")
    g.add_argument("--agreement-hash")
    sp.add_argument("--valid-time", type=int, default=365 * 86400, help="seconds")
    sp.add_argument("--copyrights", type=lambda t: _rights(t).text(), required=True,
                    help="comma-separated rights, e.g. performance,publication")

    sp = named(cmd("agreement-sign", cmd_agreement_sign, "sign agreement terms"))
    sp.add_argument("--id", required=True)
    sp.add_argument("--party", choices=("owner", "provider"), required=True)

    sp = named(cmd("media-approve", cmd_media_approve, "approve a registration (provider)"))
    sp.add_argument("--id", required=True)
    sp.add_argument("--agreement-hash", required=True)

    sp = named(cmd("access-request", cmd_access_request, "request an access token (end user)"))
    sp.add_argument("--id", required=True)
    sp.add_argument("--rights", type=_rights, required=True)
    sp.add_argument("--duration-ms", type=int, default=3_600_000)
    sp.add_argument("--out", help="write the token to this file")

    for name, fn, help_ in (("token-verify", cmd_token_verify, "verify a token"),
                            ("redeem", cmd_redeem, "download content with a token")):
        sp = cmd(name, fn, help_)
        sp.add_argument("token", nargs="?")
        sp.add_argument("--token-file")
        if name == "redeem":
            sp.add_argument("--out", required=True)

    sp = cmd("serve", cmd_serve, "run the gateway")
    sp.add_argument("--config")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8400)
    sp.add_argument("--data-dir")
    sp.add_argument("--store", default="mdm-store")
    sp.add_argument("--operator-keystore")
    sp.add_argument("--block-interval-ms", type=int, default=1000)
    sp.add_argument("--block-capacity", type=int, default=200)

    sp = cmd("bench", cmd_bench, "run the throughput benchmark")
    sp.add_argument("--config")
    sp.add_argument("--total-requests", type=int, default=2000)
    sp.add_argument("--batch-size", type=int, default=20)
    sp.add_argument("--block-interval-ms", type=int, default=1000)
    sp.add_argument("--block-capacity", type=int, default=200)
    sp.add_argument("--services", help="comma-separated subset")
    sp.add_argument("--url", help="benchmark an already running gateway")
    sp.add_argument("--operator-keystore")
    sp.add_argument("--csv")

    sp = cmd("chain-export", cmd_chain_export, "save the committed transaction log")
    sp.add_argument("--out", required=True)

    sp = cmd("replay", cmd_replay, "rebuild state from an exported log and print its root")
    sp.add_argument("log")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        out = args.fn(args)
    except MdmError as exc:
        err = exc.to_dict()
        err.update(getattr(exc, "extra", {}) or {})
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io-error", "message": str(exc)}), file=sys.stderr)
        return 1
    if out:
        _out(args, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
