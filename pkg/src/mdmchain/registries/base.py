from __future__ import annotations

import copy
import re
from typing import Any, Callable

from ..crypto import hex_bytes
from ..errors import NotFound, Revert

ADDRESS_RE = re.compile(r"^[0-9a-f]{40}$")


def require(cond: bool, reason: str, message: str = "") -> None:
    """Solidity-style ``require``: abort the current transaction."""
    if not cond:
        raise Revert(reason, message or reason)


def arg_str(args: dict, name: str, *, allow_empty: bool = False) -> str:
    v = args.get(name)
    require(isinstance(v, str), "bad-args", f"{name} must be a string")
    require(allow_empty or v != "", "bad-args", f"{name} must be nonempty")
    return v


def arg_int(args: dict, name: str) -> int:
    v = args.get(name)
    require(
        isinstance(v, int) and not isinstance(v, bool) and 0 <= v < 2**63,
        "bad-args",
        f"{name} must be an unsigned integer",
    )
    return v


def arg_hex(args: dict, name: str, length: int) -> str:
    v = arg_str(args, name)
    try:
        hex_bytes(v, length)
    except ValueError:
        raise Revert("bad-args", f"{name} must be {length} bytes of lowercase hex") from None
    return v


def arg_address(args: dict, name: str) -> str:
    v = arg_str(args, name)
    require(bool(ADDRESS_RE.match(v)), "bad-args", f"{name} must be a 20-byte hex address")
    return v


class Registry:
    """One on-chain state machine.

    Subclasses list their mutating operations in ``writes`` and their view
    functions in ``reads``; the ledger dispatches by name. Write methods are
    called as ``method(caller, args)`` and must finish every ``require``
    before touching state, so a revert is always a no-op.
    """

    name: str = ""
    writes: tuple[str, ...] = ()
    reads: tuple[str, ...] = ()

    def __init__(self, world: "Any") -> None:
        self.world = world

    def apply(self, caller: str, op: str, args: dict) -> None:
        require(op in self.writes, "unknown-operation", f"{self.name}.{op}")
        require(isinstance(args, dict), "bad-args")
        getattr(self, op)(caller, args)

    def read(self, op: str, *params: Any) -> Any:
        if op not in self.reads:
            raise NotFound("unknown-operation", f"{self.name}.{op} is not a view")
        fn: Callable[..., Any] = getattr(self, op)
        return copy.deepcopy(fn(*params))

    def snapshot(self) -> dict:
        raise NotImplementedError
