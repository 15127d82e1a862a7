"""HMAC-bound SHA-256 client puzzles.

A challenge binds a random nonce, the issue time, the client identity and the
difficulty under a server key. The client searches for an 8-byte counter such
that ``SHA256(counter || nonce)`` starts with ``difficulty`` zero bits. The
server re-derives the tag and checks the work with one HMAC and one hash, so
issuing and verifying keep no per-challenge state.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
import secrets
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import ConfigError

NONCE_SIZE = 16
TAG_SIZE = 32
MAX_DIFFICULTY = 32
MAX_CLIENT_ID_BYTES = 64
CHALLENGE_TTL = 60  # seconds

_ID_ENCODING = ("utf-8", "surrogateescape")


class VerifyOutcome(enum.Enum):
    ACCEPT = "accept"
    REJECT_BAD_TAG = "bad_tag"
    REJECT_EXPIRED = "expired"
    REJECT_WRONG_CLIENT = "wrong_client"
    REJECT_WRONG_DIFFICULTY = "wrong_difficulty"
    REJECT_INSUFFICIENT_WORK = "insufficient_work"

    @property
    def accepted(self) -> bool:
        return self is VerifyOutcome.ACCEPT


@dataclass(frozen=True)
class Challenge:
    nonce: bytes
    issued_at: int
    client_id: str
    difficulty: int
    tag: bytes

    def signed_bytes(self) -> bytes:
        return challenge_message(self.nonce, self.issued_at, self.client_id, self.difficulty)


@dataclass(frozen=True)
class Solution:
    challenge: Challenge
    counter: int

    def work_input(self) -> bytes:
        return self.counter.to_bytes(8, "big") + self.challenge.nonce


@dataclass(frozen=True)
class SolveStats:
    attempts: int
    elapsed: float


def challenge_message(nonce: bytes, issued_at: int, client_id: str, difficulty: int) -> bytes:
    """Byte layout covered by the tag.

    Raises ValueError (or OverflowError) when a field cannot be encoded in its
    fixed-width slot.
    """
    return (
        bytes(nonce)
        + int(issued_at).to_bytes(8, "big")
        + client_id.encode(*_ID_ENCODING)
        + int(difficulty).to_bytes(1, "big")
    )


def compute_tag(server_key: bytes, message: bytes) -> bytes:
    return hmac.new(server_key, message, hashlib.sha256).digest()


def count_leading_zero_bits(digest: bytes) -> int:
    if len(digest) != 32:
        raise ValueError(f"expected a 32-byte digest, got {len(digest)} bytes")
    return 256 - int.from_bytes(digest, "big").bit_length()


def _check_difficulty(difficulty: int) -> None:
    if not isinstance(difficulty, int) or not 0 <= difficulty <= MAX_DIFFICULTY:
        raise ConfigError(f"difficulty must be an integer in [0, {MAX_DIFFICULTY}], got {difficulty!r}")


def generate_challenge(
    client_id: str,
    difficulty: int,
    now: float,
    server_key: bytes,
    rng: Callable[[int], bytes] = secrets.token_bytes,
) -> Challenge:
    """Issue a fresh challenge for ``client_id``. Touches no server state."""
    _check_difficulty(difficulty)
    if len(client_id.encode(*_ID_ENCODING)) > MAX_CLIENT_ID_BYTES:
        raise ConfigError(f"client_id longer than {MAX_CLIENT_ID_BYTES} bytes")
    nonce = rng(NONCE_SIZE)
    issued_at = int(now)
    tag = compute_tag(server_key, challenge_message(nonce, issued_at, client_id, difficulty))
    return Challenge(nonce=nonce, issued_at=issued_at, client_id=client_id, difficulty=difficulty, tag=tag)


def solve(challenge: Challenge, clock: Callable[[], float] = time.perf_counter) -> tuple[Solution, SolveStats]:
    """Brute-force the smallest counter meeting the challenge difficulty."""
    started = clock()
    limit = 1 << (256 - challenge.difficulty)
    nonce = challenge.nonce
    sha256 = hashlib.sha256
    counter = 0
    while int.from_bytes(sha256(counter.to_bytes(8, "big") + nonce).digest(), "big") >= limit:
        counter += 1
    return Solution(challenge, counter), SolveStats(attempts=counter + 1, elapsed=clock() - started)


def verify(
    solution: Solution,
    expected_client_id: str,
    expected_difficulty: int,
    now: float,
    server_key: bytes,
    work_check: Optional[Callable[[Solution], bool]] = None,
) -> VerifyOutcome:
    """Check a submitted solution; returns the first failed check.

    The tag and the work hash are both computed on every call so the cost does
    not depend on which check fails. ``work_check`` replaces the leading-zero
    test (used by the simulated-clock harness, where work is modelled).
    """
    c = solution.challenge
    try:
        message = challenge_message(c.nonce, c.issued_at, c.client_id, c.difficulty)
        counter_ok = 0 <= solution.counter < 1 << 64
        work_input = solution.work_input() if counter_ok else b"\x00" * 8 + bytes(c.nonce)
    except (ValueError, OverflowError, TypeError, UnicodeError):
        message, counter_ok, work_input = b"", False, b""
    tag = compute_tag(server_key, message)
    tag_ok = bool(message) and hmac.compare_digest(tag, bytes(c.tag))

    if work_check is None:
        digest = hashlib.sha256(work_input).digest()
        work_ok = counter_ok and count_leading_zero_bits(digest) >= c.difficulty
    else:
        work_ok = counter_ok and work_check(solution)

    if not tag_ok:
        return VerifyOutcome.REJECT_BAD_TAG
    if c.client_id != expected_client_id:
        return VerifyOutcome.REJECT_WRONG_CLIENT
    if c.difficulty < expected_difficulty:
        return VerifyOutcome.REJECT_WRONG_DIFFICULTY
    if now < c.issued_at or now - c.issued_at > CHALLENGE_TTL:
        return VerifyOutcome.REJECT_EXPIRED
    if not work_ok:
        return VerifyOutcome.REJECT_INSUFFICIENT_WORK
    return VerifyOutcome.ACCEPT
