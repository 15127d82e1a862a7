"""Newline-delimited JSON wire protocol.

Every message is one UTF-8 JSON object on its own line, discriminated by
``"type"``. Binary fields are lowercase hex, integers are plain JSON numbers,
and readers ignore fields they do not know.

``request``
    ``client_id`` (string, optional; the server falls back to the peer
    address), ``path`` (string), ``solution`` (object, optional),
    ``bypass_token`` (string, optional).

    ``solution`` echoes the challenge: ``nonce`` (hex, 16 bytes),
    ``issued_at`` (int), ``difficulty`` (int), ``tag`` (hex, 32 bytes),
    ``counter`` (int, 0 <= counter < 2**64) and optionally ``client_id``
    (defaults to the request's identity).

``challenge``
    ``nonce`` (hex), ``issued_at`` (int), ``difficulty`` (int), ``tag`` (hex).

``reject``
    ``reason`` (string), ``retry_after_ms`` (int).

``data``
    ``items`` (array of objects), ``padding`` (string of printable filler
    bytes). The decoy count is never sent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .puzzle import Challenge, Solution

MAX_LINE = 1 << 20


class MalformedMessage(ValueError):
    pass


@dataclass(frozen=True)
class Request:
    path: str
    client_id: Optional[str] = None
    solution: Optional[Solution] = None
    bypass_token: Optional[str] = None


@dataclass(frozen=True)
class ChallengeMsg:
    nonce: bytes
    issued_at: int
    difficulty: int
    tag: bytes

    @classmethod
    def from_challenge(cls, c: Challenge) -> "ChallengeMsg":
        return cls(c.nonce, c.issued_at, c.difficulty, c.tag)

    def to_challenge(self, client_id: str) -> Challenge:
        return Challenge(self.nonce, self.issued_at, client_id, self.difficulty, self.tag)


@dataclass(frozen=True)
class Reject:
    reason: str
    retry_after_ms: int = 0


@dataclass(frozen=True)
class DataResponse:
    items: list = field(default_factory=list)
    padding: bytes = b""


WireMessage = Union[Request, ChallengeMsg, Reject, DataResponse]


def _solution_to_dict(s: Solution) -> dict[str, Any]:
    c = s.challenge
    return {
        "client_id": c.client_id,
        "nonce": c.nonce.hex(),
        "issued_at": c.issued_at,
        "difficulty": c.difficulty,
        "tag": c.tag.hex(),
        "counter": s.counter,
    }


def to_dict(msg: WireMessage) -> dict[str, Any]:
    if isinstance(msg, Request):
        out: dict[str, Any] = {"type": "request", "path": msg.path}
        if msg.client_id is not None:
            out["client_id"] = msg.client_id
        if msg.solution is not None:
            out["solution"] = _solution_to_dict(msg.solution)
        if msg.bypass_token is not None:
            out["bypass_token"] = msg.bypass_token
        return out
    if isinstance(msg, ChallengeMsg):
        return {
            "type": "challenge",
            "nonce": msg.nonce.hex(),
            "issued_at": msg.issued_at,
            "difficulty": msg.difficulty,
            "tag": msg.tag.hex(),
        }
    if isinstance(msg, Reject):
        return {"type": "reject", "reason": msg.reason, "retry_after_ms": msg.retry_after_ms}
    if isinstance(msg, DataResponse):
        return {"type": "data", "items": msg.items, "padding": msg.padding.decode("ascii")}
    raise TypeError(f"not a wire message: {msg!r}")


def encode(msg: WireMessage) -> bytes:
    return json.dumps(to_dict(msg), separators=(",", ":"), ensure_ascii=False).encode("utf-8") + b"\n"


def _get(d: dict, key: str, kind: type, optional: bool = False) -> Any:
    if key not in d:
        if optional:
            return None
        raise MalformedMessage(f"missing field {key!r}")
    value = d[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise MalformedMessage(f"field {key!r} must be an integer")
    if not isinstance(value, kind):
        raise MalformedMessage(f"field {key!r} must be {kind.__name__}")
    return value


def _hex(d: dict, key: str, size: int) -> bytes:
    raw = _get(d, key, str)
    if raw != raw.lower():
        raise MalformedMessage(f"field {key!r} must be lowercase hex")
    try:
        value = bytes.fromhex(raw)
    except ValueError:
        raise MalformedMessage(f"field {key!r} is not hex") from None
    if len(value) != size:
        raise MalformedMessage(f"field {key!r} must be {size} bytes")
    return value


def _solution_from_dict(d: Any, default_client: Optional[str]) -> Solution:
    if not isinstance(d, dict):
        raise MalformedMessage("solution must be an object")
    client_id = _get(d, "client_id", str, optional=True)
    if client_id is None:
        client_id = default_client if default_client is not None else ""
    counter = _get(d, "counter", int)
    issued_at = _get(d, "issued_at", int)
    difficulty = _get(d, "difficulty", int)
    if not 0 <= counter < 1 << 64 or not 0 <= issued_at < 1 << 64 or not 0 <= difficulty < 256:
        raise MalformedMessage("solution field out of range")
    challenge = Challenge(
        nonce=_hex(d, "nonce", 16),
        issued_at=issued_at,
        client_id=client_id,
        difficulty=difficulty,
        tag=_hex(d, "tag", 32),
    )
    return Solution(challenge, counter)


def from_dict(d: Any) -> WireMessage:
    if not isinstance(d, dict):
        raise MalformedMessage("message must be a JSON object")
    kind = d.get("type")
    if kind == "request":
        client_id = _get(d, "client_id", str, optional=True)
        sol = d.get("solution")
        return Request(
            path=_get(d, "path", str),
            client_id=client_id,
            solution=None if sol is None else _solution_from_dict(sol, client_id),
            bypass_token=_get(d, "bypass_token", str, optional=True),
        )
    if kind == "challenge":
        return ChallengeMsg(
            nonce=_hex(d, "nonce", 16),
            issued_at=_get(d, "issued_at", int),
            difficulty=_get(d, "difficulty", int),
            tag=_hex(d, "tag", 32),
        )
    if kind == "reject":
        return Reject(reason=_get(d, "reason", str), retry_after_ms=_get(d, "retry_after_ms", int))
    if kind == "data":
        items = _get(d, "items", list)
        padding = _get(d, "padding", str, optional=True) or ""
        try:
            pad = padding.encode("ascii")
        except UnicodeEncodeError:
            raise MalformedMessage("padding must be ASCII") from None
        return DataResponse(items=items, padding=pad)
    raise MalformedMessage(f"unknown message type {kind!r}")


def decode(line: Union[bytes, str]) -> WireMessage:
    if isinstance(line, bytes):
        if len(line) > MAX_LINE:
            raise MalformedMessage("line too long")
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedMessage("not UTF-8") from None
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedMessage(f"not JSON: {exc.msg}") from None
    return from_dict(data)


def with_identity(req: Request, client_id: str) -> Request:
    """Fill in ``client_id`` (and the echoed solution identity) when absent."""
    if req.client_id is not None:
        return req
    sol = req.solution
    if sol is not None and sol.challenge.client_id == "":
        c = sol.challenge
        sol = Solution(Challenge(c.nonce, c.issued_at, client_id, c.difficulty, c.tag), sol.counter)
    return Request(path=req.path, client_id=client_id, solution=sol, bypass_token=req.bypass_token)
