"""Real-clock throughput measurements.

Clients solve one challenge during setup and then resubmit that solution for
the whole run. Verification is stateless, so a solution stays valid until the
challenge expires, and the measured window contains no client-side hashing.
"""
from __future__ import annotations

import asyncio
import statistics
import time
from dataclasses import dataclass
from typing import Optional

from ..config import EdsConfig, preset
from ..gateway import Gateway
from ..puzzle import CHALLENGE_TTL, solve
from ..server import GatewayServer
from ..wire import MAX_LINE, ChallengeMsg, DataResponse, Request, decode, encode

BENCH_PATH = "/ping"


@dataclass(frozen=True)
class BenchResult:
    clients: int
    difficulty: int
    duration: float
    requests: int
    verified: int
    rps: float
    p50_ms: float
    p99_ms: float


def bench_config(difficulty: int, **overrides) -> EdsConfig:
    """Puzzle-only configuration with every client pinned at ``difficulty``."""
    return preset("moderate", d_base=difficulty, d_range=0, d_min=0, rho=0.0, gamma=1.0, **overrides).with_keys()


def _percentile(sorted_vals: list[float], q: float) -> float:
    if not sorted_vals:
        return float("nan")
    k = min(len(sorted_vals) - 1, max(0, round(q * (len(sorted_vals) - 1))))
    return sorted_vals[k]


async def throughput_bench(gateway: Gateway, clients: int, duration: float,
                           host: str = "127.0.0.1") -> BenchResult:
    """Drive ``clients`` concurrent TCP connections for ``duration`` seconds."""
    if clients < 1 or duration <= 0:
        raise ValueError("need clients >= 1 and duration > 0")
    if duration >= CHALLENGE_TTL:
        raise ValueError(f"duration must stay below the {CHALLENGE_TTL}s challenge lifetime")
    server = GatewayServer(gateway, host, 0)
    await server.start()
    addr = server.address
    go = asyncio.Event()
    ready = 0
    all_ready = asyncio.Event()
    latencies: list[float] = []
    counts = [0, 0]  # requests, verified

    async def client(i: int) -> None:
        nonlocal ready
        cid = f"bench-{i}"
        reader, writer = await asyncio.open_connection(*addr, limit=MAX_LINE)
        try:
            writer.write(encode(Request(BENCH_PATH, cid)))
            await writer.drain()
            msg = decode(await reader.readline())
            if isinstance(msg, ChallengeMsg):
                solution, _ = solve(msg.to_challenge(cid))
                line = encode(Request(BENCH_PATH, cid, solution))
            else:  # puzzles disabled
                line = encode(Request(BENCH_PATH, cid))
            ready += 1
            if ready == clients:
                all_ready.set()
            await go.wait()
            loop = asyncio.get_running_loop()
            end = loop.time() + duration
            while loop.time() < end:
                t0 = time.perf_counter()
                writer.write(line)
                await writer.drain()
                reply = decode(await reader.readline())
                latencies.append(time.perf_counter() - t0)
                counts[0] += 1
                if isinstance(reply, DataResponse):
                    counts[1] += 1
        finally:
            writer.close()

    tasks = [asyncio.create_task(client(i)) for i in range(clients)]
    try:
        waiter = asyncio.create_task(all_ready.wait())
        done, _ = await asyncio.wait([waiter, *tasks], return_when=asyncio.FIRST_COMPLETED)
        if waiter not in done:
            # a client failed during setup
            waiter.cancel()
            for t in done:
                t.result()
        started = time.perf_counter()
        go.set()
        await asyncio.gather(*tasks)
        elapsed = time.perf_counter() - started
    finally:
        for t in tasks:
            t.cancel()
        await server.stop()
    lat = sorted(latencies)
    return BenchResult(
        clients=clients,
        difficulty=gateway.config.d_base,
        duration=elapsed,
        requests=counts[0],
        verified=counts[1],
        rps=counts[1] / elapsed,
        p50_ms=_percentile(lat, 0.50) * 1000,
        p99_ms=_percentile(lat, 0.99) * 1000,
    )


def run_throughput_bench(difficulty: int = 8, clients: int = 1000, duration: float = 5.0,
                         config: Optional[EdsConfig] = None) -> BenchResult:
    gateway = Gateway(config or bench_config(difficulty))
    return asyncio.run(throughput_bench(gateway, clients, duration))


def _presolved(difficulty: int, clients: int) -> tuple[Gateway, list[Request]]:
    gateway = Gateway(bench_config(difficulty))
    reqs = []
    for i in range(clients):
        cid = f"bench-{i}"
        msg = gateway.handle_request(Request(BENCH_PATH, cid))
        assert isinstance(msg, ChallengeMsg)
        solution, _ = solve(msg.to_challenge(cid))
        reqs.append(Request(BENCH_PATH, cid, solution))
    return gateway, reqs


def _block_rate(gateway: Gateway, reqs: list[Request], requests: int) -> float:
    n = len(reqs)
    decide = gateway.decide
    t0 = time.perf_counter()
    for k in range(requests):
        decide(reqs[k % n])
    return requests / (time.perf_counter() - t0)


def verification_rate(difficulty: int, clients: int = 32, requests: int = 20_000, rounds: int = 5) -> float:
    """Median in-process accepted-submissions/s for pre-solved puzzles at ``difficulty``."""
    gateway, reqs = _presolved(difficulty, clients)
    return statistics.median(_block_rate(gateway, reqs, requests) for _ in range(rounds))


def compare_difficulties(low: int = 8, high: int = 16, clients: int = 32, block: int = 2_000,
                         blocks: int = 60) -> tuple[float, float]:
    """Median verification rates at two difficulties from alternating short blocks.

    Alternating blocks on the same two gateways keeps slow drift in machine
    load from landing on one difficulty only.
    """
    lo_gw, lo_reqs = _presolved(low, clients)
    hi_gw, hi_reqs = _presolved(high, clients)
    lo, hi = [], []
    for i in range(blocks):
        pair = [(lo, lo_gw, lo_reqs), (hi, hi_gw, hi_reqs)]
        for out, gw, reqs in (pair if i % 2 == 0 else pair[::-1]):
            out.append(_block_rate(gw, reqs, block))
    return statistics.median(lo), statistics.median(hi)
