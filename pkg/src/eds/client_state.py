"""Per-client reputation, failure counts and adaptive difficulty.

Records live in a :class:`StateTable` bounded by a record count. When the
table is over capacity the record with the oldest ``last_seen`` goes first,
ties broken by the lexicographically smaller client id.
"""
from __future__ import annotations

import enum
import heapq
import math
import threading
from dataclasses import dataclass
from typing import IO, TYPE_CHECKING, Iterator, Optional, Union

if TYPE_CHECKING:
    from .config import EdsConfig

_REP_DIGITS = 9


class Level(enum.IntEnum):
    NORMAL = 0
    ELEVATED = 1
    CRITICAL = 2

    @property
    def adjustment(self) -> int:
        return 2 * int(self)

    @classmethod
    def parse(cls, value: Union["Level", str, int]) -> "Level":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(value)


@dataclass
class ClientRecord:
    client_id: str
    reputation: float = 1.0
    failures: int = 0
    last_seen: float = 0.0
    created_at: float = 0.0

    def to_line(self) -> str:
        if any(ch in self.client_id for ch in "\t\n\r"):
            raise ValueError("client_id may not contain tabs or newlines")
        return "\t".join(
            (
                self.client_id,
                f"{self.reputation:.6f}".rstrip("0").rstrip(".") or "0",
                str(self.failures),
                _fmt_time(self.last_seen),
                _fmt_time(self.created_at),
            )
        )

    @classmethod
    def from_line(cls, line: str) -> "ClientRecord":
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) < 4:
            raise ValueError(f"record needs at least 4 fields: {line!r}")
        client_id, rep, failures, last_seen = fields[:4]
        last = float(last_seen)
        created = float(fields[4]) if len(fields) > 4 and fields[4] else last
        return cls(client_id, _clamp_rep(float(rep)), int(failures), last, created)


def _fmt_time(t: float) -> str:
    t = float(t)
    return str(int(t)) if t.is_integer() and abs(t) < 1e15 else repr(t)


def _clamp_rep(r: float) -> float:
    return round(min(1.0, max(0.0, r)), _REP_DIGITS)


class StateTable:
    """Thread-safe LRU-bounded map of client id to :class:`ClientRecord`."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._records: dict[str, ClientRecord] = {}
        # lazy-deletion heap of (last_seen, client_id); stale entries skipped on pop
        self._heap: list[tuple[float, str]] = []
        self._lock = threading.RLock()
        self.evictions = 0

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, client_id: str) -> bool:
        return client_id in self._records

    def __iter__(self) -> Iterator[ClientRecord]:
        with self._lock:
            return iter(list(self._records.values()))

    def get(self, client_id: str) -> Optional[ClientRecord]:
        """Return a copy of the record, or None if the client is unknown."""
        with self._lock:
            rec = self._records.get(client_id)
            return None if rec is None else ClientRecord(**vars(rec))

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    def _touch(self, client_id: str, now: float) -> ClientRecord:
        # caller holds the lock
        rec = self._records.get(client_id)
        if rec is None:
            rec = ClientRecord(client_id, 1.0, 0, now, now)
            self._records[client_id] = rec
        rec.last_seen = now
        heapq.heappush(self._heap, (now, client_id))
        if len(self._heap) > 4 * len(self._records) + 64:
            self._heap = [(r.last_seen, r.client_id) for r in self._records.values()]
            heapq.heapify(self._heap)
        return rec

    def touch(self, client_id: str, now: float) -> ClientRecord:
        with self._lock:
            rec = self._touch(client_id, now)
            self._evict()
            return ClientRecord(**vars(rec))

    def put(self, record: ClientRecord) -> None:
        with self._lock:
            self._records[record.client_id] = ClientRecord(**vars(record))
            heapq.heappush(self._heap, (record.last_seen, record.client_id))
            self._evict()

    def _evict(self) -> int:
        evicted = 0
        while len(self._records) > self.capacity:
            last_seen, client_id = heapq.heappop(self._heap)
            rec = self._records.get(client_id)
            if rec is None or rec.last_seen != last_seen:
                continue
            del self._records[client_id]
            evicted += 1
        self.evictions += evicted
        return evicted

    def evict_if_needed(self, now: float) -> int:
        with self._lock:
            return self._evict()

    def save(self, fp: IO[str]) -> None:
        with self._lock:
            for rec in self._records.values():
                fp.write(rec.to_line() + "\n")

    @classmethod
    def load(cls, fp: IO[str], capacity: int = 10_000) -> "StateTable":
        table = cls(capacity)
        for line in fp:
            if line.strip():
                table.put(ClientRecord.from_line(line))
        return table


def difficulty_for(
    record: Optional[ClientRecord],
    config: "EdsConfig",
    load_level: Union[Level, str] = Level.NORMAL,
    threat_level: Union[Level, str] = Level.NORMAL,
) -> int:
    reputation = 1.0 if record is None else record.reputation
    distrust = round((1.0 - reputation) * config.d_range, _REP_DIGITS)
    d = (
        config.d_base
        + math.ceil(distrust)
        + Level.parse(load_level).adjustment
        + Level.parse(threat_level).adjustment
    )
    return max(config.d_min, min(config.d_max, d))


def backoff_delay(failures: int, config: "EdsConfig") -> float:
    """min(delay_base * 2**failures, delay_max), saturating instead of overflowing."""
    if failures < 0:
        raise ValueError("failures must be non-negative")
    if config.delay_base <= 0:
        return 0.0
    if failures >= 1024:
        return float(config.delay_max)
    return float(min(math.ldexp(config.delay_base, failures), config.delay_max))


def record_success(table: StateTable, client_id: str, now: float, config: "EdsConfig") -> float:
    with table.lock:
        rec = table._touch(client_id, now)
        rec.reputation = _clamp_rep(rec.reputation + config.rep_gain)
        rec.failures = 0
        table._evict()
        return rec.reputation


def record_failure(
    table: StateTable,
    client_id: str,
    now: float,
    config: "EdsConfig",
    penalize: bool = True,
) -> tuple[int, float]:
    """Count a failure and return ``(failures, delay)``.

    ``penalize=False`` leaves reputation alone; the gateway uses it for
    denials reported by the upstream service rather than bad puzzle work.
    """
    with table.lock:
        rec = table._touch(client_id, now)
        rec.failures += 1
        if penalize:
            rec.reputation = _clamp_rep(rec.reputation - config.rep_penalty)
        failures = rec.failures
        table._evict()
    return failures, backoff_delay(failures, config)


def evict_if_needed(table: StateTable, now: float) -> int:
    return table.evict_if_needed(now)
