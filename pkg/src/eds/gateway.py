"""The enforcement point: puzzle gate, temporal stretching, decoys and tax.

:meth:`Gateway.decide` is the request handler. It returns the response and
how long the caller must hold it back; :meth:`Gateway.handle_request` does
the holding through the injected sleeper, which the harness backs with a
virtual clock and the TCP server replaces with ``asyncio.sleep``.
"""
from __future__ import annotations

import collections
import hmac
import logging
import random
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol

from . import wire
from .client_state import Level, StateTable, difficulty_for, record_failure, record_success
from .clock import real_now, real_sleep
from .config import EdsConfig
from .decoy_tax import DEFAULT_TEMPLATE, Template, inject_and_tax
from .puzzle import Solution, VerifyOutcome, generate_challenge, verify
from .wire import ChallengeMsg, DataResponse, Reject, Request, WireMessage

log = logging.getLogger(__name__)

MALFORMED = "malformed"
DENIED = "denied"


@dataclass
class Reply:
    """What the protected service returned for a forwarded request."""

    ok: bool = True
    items: list = field(default_factory=list)


class Upstream(Protocol):
    def __call__(self, request: Request) -> Reply: ...


class StubUpstream:
    """In-process stand-in for the protected service.

    Data paths return ``page_size`` records sampled from ``template``; any
    other path echoes the path back.
    """

    def __init__(self, template: Template = DEFAULT_TEMPLATE, page_size: int = 10, seed: Optional[int] = None,
                 data_prefixes: tuple[str, ...] = ("/data",)):
        self.template = template
        self.page_size = page_size
        self.data_prefixes = data_prefixes
        self._rng = random.Random(seed)
        self._lock = threading.Lock()

    def __call__(self, request: Request) -> Reply:
        if request.path.startswith(self.data_prefixes):
            with self._lock:
                return Reply(True, [self.template.sample(self._rng) for _ in range(self.page_size)])
        return Reply(True, [{"path": request.path}])


Verifier = Callable[[Solution, str, int, float, bytes], VerifyOutcome]


class Telemetry:
    """Monotone counters, safe to bump from several threads."""

    FIELDS = (
        "requests",
        "challenges_issued",
        "accepts",
        "fast_path",
        "forwarded",
        "data_responses",
        "decoys_injected",
        "padding_bytes",
        "bytes_in",
        "bytes_out",
        "sleeps",
    )

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts = dict.fromkeys(self.FIELDS, 0)
        self._rejects: collections.Counter = collections.Counter()
        self._delay_seconds = 0.0
        self._jitter_seconds = 0.0

    def add(self, name: str, n: int = 1) -> None:
        with self._lock:
            self._counts[name] += n

    def reject(self, reason: str) -> None:
        with self._lock:
            self._rejects[reason] += 1

    def slept(self, delay: float, jitter: float) -> None:
        with self._lock:
            self._counts["sleeps"] += 1
            self._delay_seconds += delay
            self._jitter_seconds += jitter

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            snap: dict[str, Any] = dict(self._counts)
            snap["rejects"] = dict(self._rejects)
            snap["rejects_total"] = sum(self._rejects.values())
            snap["delay_seconds"] = self._delay_seconds
            snap["jitter_seconds"] = self._jitter_seconds
            return snap


class LoadMonitor:
    """Request-rate estimate over a trailing one-second window."""

    def __init__(self, elevated_rps: float, critical_rps: float):
        self.elevated_rps = elevated_rps
        self.critical_rps = critical_rps
        self._times: collections.deque = collections.deque()
        self._lock = threading.Lock()

    def observe(self, now: float) -> Level:
        with self._lock:
            self._times.append(now)
            while self._times and self._times[0] <= now - 1.0:
                self._times.popleft()
            rate = len(self._times)
        if rate >= self.critical_rps:
            return Level.CRITICAL
        if rate >= self.elevated_rps:
            return Level.ELEVATED
        return Level.NORMAL


@dataclass(frozen=True)
class Decision:
    message: WireMessage
    delay: float = 0.0
    wire: bytes = b""


class Gateway:
    def __init__(
        self,
        config: EdsConfig,
        *,
        upstream: Optional[Upstream] = None,
        clock: Callable[[], float] = real_now,
        sleeper: Callable[[float], None] = real_sleep,
        rng: Optional[random.Random] = None,
        template: Template = DEFAULT_TEMPLATE,
        verifier: Optional[Verifier] = None,
        nonce_source: Optional[Callable[[int], bytes]] = None,
    ):
        config.require_keys()
        self.config = config
        self.clients = StateTable(config.capacity)
        self.telemetry = Telemetry()
        self.clock = clock
        self.sleeper = sleeper
        self.rng = rng if rng is not None else random.SystemRandom()
        self.template = template
        self.upstream = upstream if upstream is not None else StubUpstream(template, data_prefixes=config.data_prefixes)
        self.verifier: Verifier = verifier if verifier is not None else verify
        self.nonce_source = nonce_source
        self.load_level = Level.NORMAL
        self.threat_level = Level.NORMAL
        lt = config.load_thresholds
        self._load_monitor = LoadMonitor(*lt) if lt else None
        self._rng_lock = threading.Lock()

    def is_data_request(self, request: Request) -> bool:
        return request.path.startswith(self.config.data_prefixes)

    def _bypass_ok(self, token: Optional[str]) -> bool:
        if token is None:
            return False
        # compare against every token so timing does not reveal which one matched
        ok = False
        for known in self.config.bypass_tokens:
            ok |= hmac.compare_digest(token.encode(), known.encode())
        return ok

    def current_difficulty(self, client_id: str) -> int:
        return difficulty_for(self.clients.get(client_id), self.config, self.load_level, self.threat_level)

    def _stretch(self, client_id: str, now: float, reason: str, penalize: bool) -> Decision:
        _, delay = record_failure(self.clients, client_id, now, self.config, penalize=penalize)
        lo, hi = self.config.jitter
        with self._rng_lock:
            # jitter perturbs a backoff; with stretching off there is nothing to perturb
            jitter = self.rng.uniform(lo, hi) if hi > 0 and delay > 0 else 0.0
        self.telemetry.slept(delay, jitter)
        self.telemetry.reject(reason)
        return Decision(Reject(reason, round(delay * 1000)), delay + jitter)

    def decide(self, request: Any, now: Optional[float] = None, size_in: Optional[int] = None) -> Decision:
        """Run the request handler without sleeping; see :meth:`handle_request`."""
        if size_in is None and isinstance(request, Request):
            size_in = len(wire.encode(request))
        self.telemetry.add("bytes_in", size_in or 0)
        decision = self._decide(request, self.clock() if now is None else now)
        line = wire.encode(decision.message)
        self.telemetry.add("bytes_out", len(line))
        return Decision(decision.message, decision.delay, line)

    def _decide(self, request: Any, now: float) -> Decision:
        tm = self.telemetry
        tm.add("requests")
        if self._load_monitor is not None:
            self.load_level = self._load_monitor.observe(now)
        if not isinstance(request, Request) or request.client_id is None:
            tm.reject(MALFORMED)
            return Decision(Reject(MALFORMED, 0))
        cfg = self.config
        client_id = request.client_id

        if self._bypass_ok(request.bypass_token):
            tm.add("fast_path")
            return self._forward(request, client_id, now, shape=False)

        if cfg.puzzles_enabled:
            if request.solution is None:
                d = self.current_difficulty(client_id)
                kwargs = {"rng": self.nonce_source} if self.nonce_source else {}
                try:
                    challenge = generate_challenge(client_id, d, now, cfg.server_key, **kwargs)
                except ValueError:
                    tm.reject(MALFORMED)
                    return Decision(Reject(MALFORMED, 0))
                tm.add("challenges_issued")
                return Decision(ChallengeMsg.from_challenge(challenge))
            expected = max(request.solution.challenge.difficulty, cfg.d_min)
            outcome = self.verifier(request.solution, client_id, expected, now, cfg.server_key)
            if not outcome.accepted:
                return self._stretch(client_id, now, outcome.value, penalize=True)
            tm.add("accepts")
        return self._forward(request, client_id, now, shape=True)

    def _forward(self, request: Request, client_id: str, now: float, shape: bool) -> Decision:
        reply = self.upstream(request)
        tm = self.telemetry
        if not shape:
            tm.add("forwarded")
            return Decision(DataResponse(list(reply.items)))
        if not reply.ok:
            return self._stretch(client_id, now, DENIED, penalize=False)
        record_success(self.clients, client_id, now, self.config)
        tm.add("forwarded")
        if not self.is_data_request(request):
            return Decision(DataResponse(list(reply.items)))
        with self._rng_lock:
            taxed = inject_and_tax(
                reply.items, self.config.rho, self.config.gamma, self.template, self.config.watermark_key, self.rng
            )
        tm.add("data_responses")
        tm.add("decoys_injected", taxed.decoy_count)
        tm.add("padding_bytes", len(taxed.padding))
        return Decision(DataResponse(taxed.items, taxed.padding))

    def handle_request(self, request: Any, now: Optional[float] = None) -> WireMessage:
        decision = self.decide(request, now)
        if decision.delay > 0:
            self.sleeper(decision.delay)
        return decision.message

    def process_line(self, line: bytes, now: Optional[float] = None, peer: Optional[str] = None) -> Decision:
        """Decode one wire line and decide on it. Bad input yields a malformed reject."""
        try:
            request = wire.decode(line)
        except wire.MalformedMessage as exc:
            log.debug("malformed message from %s: %s", peer, exc)
            request = None
        if isinstance(request, Request) and peer is not None:
            request = wire.with_identity(request, peer)
        return self.decide(request, now)

    def telemetry_snapshot(self) -> dict[str, Any]:
        snap = self.telemetry.snapshot()
        snap["clients"] = len(self.clients)
        snap["evictions"] = self.clients.evictions
        return snap


def telemetry_snapshot(gateway: Gateway) -> dict[str, Any]:
    return gateway.telemetry_snapshot()
