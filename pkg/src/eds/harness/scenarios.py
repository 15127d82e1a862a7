"""Discrete-event attack simulations against an in-process gateway.

Each trial runs a real :class:`~eds.gateway.Gateway` whose clock and sleeper
are backed by a :class:`~eds.clock.VirtualClock`. Attacker workers carry
their own virtual time and are advanced in start-time order. Network round
trips, upstream service and transfer time are added to a worker's time
directly; gateway-imposed delays go through the virtual sleeper, so they
show up in the clock's ``slept`` total.

Puzzle work is not computed. The number of hashes an exchange needs is drawn
from the geometric law of the hash search, from a random stream keyed by
``(seed, path, attempt)``. Configurations and strategies that issue the same
requests therefore face identical work draws. The gateway's tag, identity,
difficulty and expiry checks all still run; only the leading-zero test is
replaced by a record of which nonces the simulation has "solved".
"""
from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Optional

from ..clock import VirtualClock
from ..config import EdsConfig, preset
from ..decoy_tax import Template
from ..economics import CostParams, Theta, defender_cost, per_second, total_attacker_cost
from ..errors import DomainError
from ..gateway import DENIED, Gateway, Reply
from ..puzzle import Solution, VerifyOutcome, verify
from ..wire import ChallengeMsg, DataResponse, Reject, Request, encode

GB = 1e9

BRUTE_FORCE, RECON, EXFILTRATION, CNC = "brute_force", "recon", "exfiltration", "cnc"
SCENARIO_KINDS = (BRUTE_FORCE, RECON, EXFILTRATION, CNC)


@dataclass(frozen=True)
class Scenario:
    """One attack goal.

    ``target_space`` counts the real things the attacker is after: accounts
    (brute force), endpoints (recon), records (exfiltration) or beacons (C&C).
    """

    name: str
    kind: str
    target_space: int
    template: dict
    key_field: str
    page_size: int = 20
    rtt: float = 0.02
    service_time: float = 0.05
    link_bps: float = math.inf  # attacker downlink, bytes/s
    keyspace: int = 1  # brute force: candidate passwords per account
    hash_rate: Optional[float] = None  # overrides the strategy's (C&C bots)
    beacon_interval: float = 60.0
    deadline: float = 2.0
    items_per_beacon: int = 5
    budget: float = 50.0

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise DomainError(f"unknown scenario kind {self.kind!r}")
        if self.target_space < 1:
            raise DomainError("target_space must be >= 1")
        if self.page_size < 1 or self.keyspace < 1:
            raise DomainError("page_size and keyspace must be >= 1")

    @property
    def collection(self) -> str:
        return {BRUTE_FORCE: "/data/accounts", RECON: "/data/endpoints",
                EXFILTRATION: "/data/records", CNC: "/data/commands"}[self.kind]

    @property
    def action(self) -> str:
        return {BRUTE_FORCE: "/login", RECON: "/probe", EXFILTRATION: "/verify", CNC: ""}[self.kind]


_STR = {"kind": "str", "min_len": 8, "max_len": 12}

SCENARIOS = {
    "s1": Scenario(
        "s1", BRUTE_FORCE, target_space=10, keyspace=100, page_size=10, service_time=0.2,
        template={"fields": {"user": _STR, "shell": {"kind": "enum", "values": ["bash", "sh", "zsh"]}}},
        key_field="user",
    ),
    "s2": Scenario(
        "s2", RECON, target_space=100, page_size=20,
        template={"fields": {"endpoint": _STR, "port": {"kind": "int", "min": 1, "max": 65535}}},
        key_field="endpoint",
    ),
    "s3": Scenario(
        "s3", EXFILTRATION, target_space=500, page_size=50, link_bps=10_000.0,
        template={"fields": {"id": _STR, "owner": {"kind": "str", "min_len": 4, "max_len": 10},
                             "balance": {"kind": "int", "min": 0, "max": 100000}}},
        key_field="id",
    ),
    "s4": Scenario(
        "s4", CNC, target_space=50, hash_rate=1e6,
        template={"fields": {"cmd": {"kind": "enum", "values": ["scan", "sleep", "report", "update"]},
                             "arg": {"kind": "str", "min_len": 4, "max_len": 16}}},
        key_field="cmd",
    ),
}


NAIVE, PARALLEL, RATE_OPTIMIZED, IP_ROTATING, DECOY_FILTERING, COMBINED = (
    "naive", "parallel", "rate_optimized", "ip_rotating", "decoy_filtering", "combined",
)
STRATEGY_KINDS = (NAIVE, PARALLEL, RATE_OPTIMIZED, IP_ROTATING, DECOY_FILTERING, COMBINED)


@dataclass(frozen=True)
class Strategy:
    kind: str = NAIVE
    workers: int = 1
    hash_rate: float = 1e7  # hashes/s per worker
    time_value: float = 50.0  # $/hour
    accuracy: float = 0.73  # P(flag | decoy)
    fpr: float = 0.27  # P(flag | real)
    training_cost: float = 45.0
    identity_cost: float = 0.001  # $ per fresh source address

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise DomainError(f"unknown strategy {self.kind!r}")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")
        if not (0 <= self.accuracy <= 1 and 0 <= self.fpr <= 1):
            raise DomainError("accuracy and fpr must lie in [0, 1]")
        if not self.hash_rate > 0:
            raise DomainError("hash_rate must be positive")

    @classmethod
    def parse(cls, text: str, **kw: Any) -> "Strategy":
        """``naive``, ``parallel:4``, ``decoy_filtering:0.73:0.27``, ``combined`` ..."""
        name, *args = text.split(":")
        try:
            if name == PARALLEL:
                return cls(PARALLEL, workers=int(args[0]) if args else 4, **kw)
            if name == DECOY_FILTERING and args:
                return cls(DECOY_FILTERING, accuracy=float(args[0]), fpr=float(args[1]), **kw)
            if name == COMBINED:
                return cls(COMBINED, workers=int(args[0]) if args else 4, **kw)
        except (IndexError, ValueError) as exc:
            raise DomainError(f"bad strategy spec {text!r}") from exc
        if args:
            raise DomainError(f"strategy {name!r} takes no parameters")
        return cls(name, **kw)

    @property
    def label(self) -> str:
        if self.kind in (PARALLEL, COMBINED):
            return f"{self.kind}:{self.workers}"
        return self.kind

    @property
    def prefetch(self) -> bool:
        return self.kind in (RATE_OPTIMIZED, COMBINED)

    @property
    def rotates(self) -> bool:
        return self.kind in (IP_ROTATING, COMBINED)

    @property
    def filters(self) -> bool:
        return self.kind in (DECOY_FILTERING, COMBINED)


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    strategy: str
    preset: str
    seed: int
    budget: float
    wall_time: float
    baseline_time: float
    slowdown: float
    asr: float
    completion: float
    hashes: int
    requests: int
    interactions: int
    bytes_received: int
    attacker_dollars: float
    defender_dollars: float
    virtual_sleep: float
    telemetry_sleep: float
    superlinearity_measured: Optional[float] = None

    def row(self) -> dict[str, Any]:
        return asdict(self)


def sample_hashes(difficulty: int, rng: random.Random) -> int:
    """Attempts until the first hash with ``difficulty`` leading zero bits."""
    if difficulty <= 0:
        return 1
    u = 1.0 - rng.random()  # (0, 1]
    return int(math.log(u) / math.log1p(-math.ldexp(1.0, -difficulty))) + 1


def _key(seed: int, label: str) -> bytes:
    return hashlib.sha256(f"eds-sim:{seed}:{label}".encode()).digest()


class ScenarioService:
    """The protected service for a scenario, with ground truth for scoring."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.template = Template.from_dict(scenario.template)
        rng = random.Random(f"{seed}:data")
        n = scenario.items_per_beacon if scenario.kind == CNC else scenario.target_space
        self.items: list[dict] = []
        seen: set = set()
        while len(self.items) < n:
            item = self.template.sample(rng)
            k = item[scenario.key_field]
            if k in seen and scenario.kind != CNC:
                continue
            seen.add(k)
            self.items.append(item)
        self.real_keys = {it[scenario.key_field] for it in self.items}
        self.secret = {it[scenario.key_field]: rng.randrange(scenario.keyspace) for it in self.items}

    def is_real(self, item: dict) -> bool:
        return item.get(self.scenario.key_field) in self.real_keys

    def __call__(self, request: Request) -> Reply:
        sc = self.scenario
        path, _, query = request.path.partition("?")
        if path == sc.collection:
            if sc.kind == CNC:
                return Reply(True, [dict(it) for it in self.items])
            page = int(query.partition("=")[2] or 0)
            lo = page * sc.page_size
            return Reply(True, [dict(it) for it in self.items[lo:lo + sc.page_size]])
        parts = path.split("/")
        if sc.kind == BRUTE_FORCE and len(parts) == 4 and parts[1] == "login":
            user, guess = parts[2], parts[3]
            ok = user in self.real_keys and guess == str(self.secret[user])
            return Reply(ok, [{"login": user}] if ok else [])
        if len(parts) == 3 and "/" + parts[1] == sc.action:
            ok = parts[2] in self.real_keys
            return Reply(ok, [{"ok": parts[2]}] if ok else [])
        return Reply(False, [])


@dataclass(order=True)
class _Event:
    t: float
    seq: int
    hashes: int = field(compare=False, default=0)
    nbytes: int = field(compare=False, default=0)
    progress: int = field(compare=False, default=0)  # targets achieved
    fixed: float = field(compare=False, default=0.0)
    busy: float = field(compare=False, default=0.0)


@dataclass
class _Worker:
    t: float = 0.0
    credit: float = 0.0  # delay the previous exchange spent waiting (prefetch window)


class _Trial:
    def __init__(self, scenario: Scenario, strategy: Strategy, config: EdsConfig, seed: int,
                 params: CostParams):
        self.sc = scenario
        self.st = strategy
        self.seed = seed
        self.params = params
        self.clock = VirtualClock(start=0.0)
        self.service = ScenarioService(scenario, seed)
        self.config = config.with_keys(_key(seed, "server"), _key(seed, "watermark"))
        nonce_rng = random.Random(f"{seed}:nonce")
        self.gateway = Gateway(
            self.config,
            upstream=self.service,
            clock=self.clock.now,
            sleeper=self.clock.sleep,
            rng=random.Random(f"{seed}:gateway"),
            template=self.service.template,
            verifier=self._verify,
            nonce_source=nonce_rng.randbytes,
        )
        self.solved: set[bytes] = set()
        self.attempts: dict[str, int] = {}
        self.events: list[_Event] = []
        self.hashes = 0
        self.requests = 0
        self.interactions = 0
        self.nbytes = 0
        self.identities = 0
        self.hash_rate = scenario.hash_rate or strategy.hash_rate

    def _verify(self, solution: Solution, client_id: str, difficulty: int, now: float, key: bytes) -> VerifyOutcome:
        return verify(solution, client_id, difficulty, now, key,
                      work_check=lambda s: s.challenge.nonce in self.solved)

    def _identity(self) -> str:
        if self.st.rotates:
            self.identities += 1
            return f"10.{self.identities >> 16 & 255}.{self.identities >> 8 & 255}.{self.identities & 255}"
        return "198.51.100.7"

    def _send(self, t: float, request: Request) -> tuple[Any, float]:
        self.clock.set(t)
        msg = self.gateway.handle_request(request)
        self.requests += 1
        self.nbytes += len(encode(msg))
        return msg, self.clock.now()

    def exchange(self, w: _Worker, path: str) -> tuple[Any, _Event]:
        """One logical request, including the puzzle round trip when enabled."""
        sc = self.sc
        n = self.attempts[path] = self.attempts.get(path, 0) + 1
        cid = self._identity()
        fixed = self.st.identity_cost if self.st.rotates else 0.0
        t = w.t
        hashes = 0
        solution = None
        if self.config.puzzles_enabled:
            msg, _ = self._send(t, Request(path, cid))
            assert isinstance(msg, ChallengeMsg), msg
            hashes = sample_hashes(msg.difficulty, random.Random(f"{self.seed}:work:{path}:{n}"))
            self.solved.add(msg.nonce)
            solution = Solution(msg.to_challenge(cid), 0)
            step = sc.rtt + hashes / self.hash_rate
            if self.st.prefetch:
                # fetched and solved while the previous reply was held back
                step = max(0.0, step - w.credit)
            t += step
        msg, t_after = self._send(t, Request(path, cid, solution))
        delay = t_after - t
        t = t_after + sc.rtt
        forwarded = isinstance(msg, DataResponse) or (isinstance(msg, Reject) and msg.reason == DENIED)
        if forwarded:
            t += sc.service_time
        size = len(encode(msg))
        if math.isfinite(sc.link_bps):
            t += size / sc.link_bps
        w.t = t
        w.credit = delay
        self.hashes += hashes
        ev = _Event(t, len(self.events), hashes=hashes, nbytes=size, fixed=fixed)
        self.events.append(ev)
        return msg, ev

    def _flagged(self, item: dict) -> bool:
        key = json.dumps({k: v for k, v in item.items() if k != self.service.template.watermark_field},
                         sort_keys=True)
        r = random.Random(f"{self.seed}:filter:{key}").random()
        return r < (self.st.fpr if self.service.is_real(item) else self.st.accuracy)

    # --- the three enumerate-then-act scenarios -------------------------------

    def run_jobs(self) -> None:
        sc = self.sc
        queue: deque = deque([(0.0, ("list", 0))])
        heap = [(0.0, i) for i in range(self.st.workers)]
        workers = [_Worker() for _ in range(self.st.workers)]
        while heap and queue:
            _, i = heapq.heappop(heap)
            w = workers[i]
            ready, job = queue.popleft()
            w.t = max(w.t, ready)
            follow: list = []
            if job[0] == "list":
                page = job[1]
                msg, ev = self.exchange(w, f"{sc.collection}?page={page}")
                items = msg.items if isinstance(msg, DataResponse) else []
                if items:
                    follow.append(("list", page + 1))
                for item in items:
                    if self.st.filters and self._flagged(item):
                        continue
                    key = item.get(sc.key_field)
                    follow.append(("login", key, 0) if sc.kind == BRUTE_FORCE else ("act", key, item))
            elif job[0] == "login":
                _, user, guess = job
                msg, ev = self.exchange(w, f"{sc.action}/{user}/{guess}")
                self.interactions += 1
                if isinstance(msg, DataResponse):
                    ev.progress = 1
                elif guess + 1 < sc.keyspace:
                    follow.append(("login", user, guess + 1))
            else:
                _, key, item = job
                msg, ev = self.exchange(w, f"{sc.action}/{key}")
                self.interactions += 1
                if isinstance(msg, DataResponse) and self.service.is_real(item):
                    ev.progress = 1
            queue.extend((w.t, f) for f in follow)
            heapq.heappush(heap, (w.t, i))

    def run_beacons(self) -> None:
        sc = self.sc
        w = _Worker()
        self.latency = 0.0
        for i in range(sc.target_space):
            start = max(w.t, i * sc.beacon_interval)
            w.t = start
            msg, ev = self.exchange(w, sc.collection)
            took = w.t - start
            self.latency += took
            ev.busy = took
            if isinstance(msg, DataResponse) and took <= sc.deadline:
                ev.progress = 1

    def run(self) -> "_Outcome":
        if self.sc.kind == CNC:
            self.run_beacons()
            wall = self.latency
        else:
            self.run_jobs()
            wall = max((e.t for e in self.events), default=0.0)
        return _Outcome(self, wall)


@dataclass
class _Outcome:
    trial: _Trial
    wall_time: float

    def cost_curve(self) -> list[tuple[float, float]]:
        """(cumulative dollars, cumulative progress) after each completed exchange."""
        tr = self.trial
        p = tr.params
        fixed = tr.st.training_cost if tr.st.filters else 0.0
        hashes = nbytes = 0
        busy = 0.0
        progress = 0
        curve = [(fixed, 0.0)]
        for ev in sorted(tr.events):
            hashes += ev.hashes
            nbytes += ev.nbytes
            fixed += ev.fixed
            busy += ev.busy
            progress += ev.progress
            # C&C bots idle between beacons, so only active latency is billed
            t = busy if tr.sc.kind == CNC else ev.t
            dollars = (hashes * p.hash_cost + nbytes / GB * p.bandwidth_cost + fixed
                       + t * per_second(tr.st.time_value))
            curve.append((dollars, min(progress / tr.sc.target_space, 1.0)))
        return curve

    def asr(self, budget: float) -> float:
        best = 0.0
        for cost, prog in self.cost_curve():
            if cost > budget:
                break
            best = prog
        return best

    @property
    def completion(self) -> float:
        return min(1.0, sum(e.progress for e in self.trial.events) / self.trial.sc.target_space)

    def dollars(self) -> float:
        return self.cost_curve()[-1][0]


def _simulate(scenario: Scenario, strategy: Strategy, config: EdsConfig, seed: int, params: CostParams) -> _Outcome:
    return _Trial(scenario, strategy, config, seed, params).run()


def run_scenario(
    scenario: Scenario | str,
    strategy: Strategy | str = NAIVE,
    config: EdsConfig | str = "moderate",
    budget: Optional[float] = None,
    seed: int = 0,
    params: CostParams = CostParams(),
) -> ScenarioResult:
    """Simulate one attack and its no-defense baseline under the same seed."""
    sc = SCENARIOS[scenario] if isinstance(scenario, str) else scenario
    st = Strategy.parse(strategy) if isinstance(strategy, str) else strategy
    cfg = preset(config) if isinstance(config, str) else config
    budget = sc.budget if budget is None else budget
    if not budget > 0:
        raise DomainError("budget must be positive")
    out = _simulate(sc, st, cfg, seed, params)
    base = _simulate(sc, st, preset("disabled"), seed, params)
    tr = out.trial
    tele = tr.gateway.telemetry_snapshot()
    return ScenarioResult(
        scenario=sc.name,
        strategy=st.label,
        preset=cfg.preset,
        seed=seed,
        budget=budget,
        wall_time=out.wall_time,
        baseline_time=base.wall_time,
        slowdown=out.wall_time / base.wall_time if base.wall_time > 0 else math.nan,
        asr=out.asr(budget),
        completion=out.completion,
        hashes=tr.hashes,
        requests=tr.requests,
        interactions=tr.interactions,
        bytes_received=tr.nbytes,
        attacker_dollars=out.dollars(),
        defender_dollars=defender_cost(params, tele["requests"]),
        virtual_sleep=tr.clock.slept,
        telemetry_sleep=tele["delay_seconds"] + tele["jitter_seconds"],
    )


MECHANISMS = ("M1", "M2", "M3", "M4")


def isolate(config: EdsConfig, mechanism: str) -> EdsConfig:
    """``config`` with only one mechanism left on (puzzles, decoys, delays or tax)."""
    off = preset("disabled")
    if mechanism == "M1":
        return replace(config, rho=0.0, delay_base=0.0, delay_max=0.0, gamma=1.0, preset=f"{config.preset}/M1")
    if mechanism == "M2":
        return replace(off, rho=config.rho, preset=f"{config.preset}/M2")
    if mechanism == "M3":
        return replace(off, delay_base=config.delay_base, delay_max=config.delay_max, jitter=config.jitter,
                       preset=f"{config.preset}/M3")
    if mechanism == "M4":
        return replace(off, gamma=config.gamma, preset=f"{config.preset}/M4")
    raise DomainError(f"unknown mechanism {mechanism!r}")


@dataclass(frozen=True)
class CompositionStudy:
    scenario: str
    preset: str
    seed: int
    slowdowns: dict  # mechanism label -> slowdown
    combined: float
    analytic: float

    @property
    def excess_sum(self) -> float:
        """Additive baseline: 1 plus the sum of each mechanism's excess slowdown."""
        return 1.0 + sum(s - 1.0 for s in self.slowdowns.values())

    @property
    def ratio_sum(self) -> float:
        """Plain sum of the individual slowdown ratios."""
        return sum(self.slowdowns.values())

    @property
    def factor(self) -> float:
        return self.combined / self.excess_sum

    @property
    def factor_ratio_sum(self) -> float:
        return self.combined / self.ratio_sum


def run_composition_study(
    scenario: Scenario | str,
    config: EdsConfig | str = "moderate",
    seed: int = 0,
    strategy: Strategy | str = NAIVE,
    params: CostParams = CostParams(),
) -> CompositionStudy:
    sc = SCENARIOS[scenario] if isinstance(scenario, str) else scenario
    cfg = preset(config) if isinstance(config, str) else config
    slow = {m: run_scenario(sc, strategy, isolate(cfg, m), seed=seed, params=params).slowdown for m in MECHANISMS}
    combined = run_scenario(sc, strategy, cfg, seed=seed, params=params).slowdown
    analytic = total_attacker_cost(Theta.from_config(cfg), params).superlinearity
    return CompositionStudy(sc.name, cfg.preset, seed, slow, combined, analytic)
