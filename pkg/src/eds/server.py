"""TCP transport around :class:`~eds.gateway.Gateway`.

One line in, one line out, per connection and in order. Rejected requests
are held back with ``asyncio.sleep`` so a stretched client never blocks the
others. A malformed line gets a ``malformed`` reject and the connection is
closed.
"""
from __future__ import annotations

import asyncio
import json
import logging
from pathlib import Path
from typing import Optional

from .gateway import MALFORMED, Gateway
from .wire import MAX_LINE, Reject

log = logging.getLogger(__name__)


class GatewayServer:
    def __init__(self, gateway: Gateway, host: str = "127.0.0.1", port: int = 0,
                 telemetry_path: Optional[Path] = None, drain_timeout: float = 5.0):
        self.gateway = gateway
        self.host = host
        self.port = port
        self.telemetry_path = telemetry_path
        self.drain_timeout = drain_timeout
        self._server: Optional[asyncio.base_events.Server] = None
        self._handlers: set[asyncio.Task] = set()
        self._writers: set[asyncio.StreamWriter] = set()
        self._busy: set[asyncio.StreamWriter] = set()
        self._closing = False

    @property
    def address(self) -> tuple[str, int]:
        assert self._server is not None, "server not started"
        return self._server.sockets[0].getsockname()[:2]

    async def start(self) -> None:
        # bind failures propagate to the caller as OSError
        self._server = await asyncio.start_server(
            self._handle, self.host, self.port, limit=MAX_LINE, backlog=4096
        )
        self.port = self.address[1]
        log.info("gateway listening on %s:%d", *self.address)

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        if task is not None:
            self._handlers.add(task)
        self._writers.add(writer)
        peer = writer.get_extra_info("peername")
        peer_id = peer[0] if isinstance(peer, tuple) else str(peer)
        try:
            while not self._closing:
                try:
                    line = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    writer.write(self._malformed())
                    await writer.drain()
                    break
                if not line:
                    break
                if not line.endswith(b"\n"):
                    # EOF in the middle of a message
                    writer.write(self._malformed())
                    await writer.drain()
                    break
                self._busy.add(writer)
                try:
                    decision = self.gateway.process_line(line, peer=peer_id)
                    if decision.delay > 0:
                        await asyncio.sleep(decision.delay)
                    writer.write(decision.wire)
                    await writer.drain()
                finally:
                    self._busy.discard(writer)
                if isinstance(decision.message, Reject) and decision.message.reason == MALFORMED:
                    break
        except (ConnectionError, OSError) as exc:
            log.debug("connection %s dropped: %s", peer, exc)
        finally:
            self._writers.discard(writer)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            if task is not None:
                self._handlers.discard(task)

    def _malformed(self) -> bytes:
        self.gateway.telemetry.add("requests")
        self.gateway.telemetry.reject(MALFORMED)
        line = json.dumps({"type": "reject", "reason": MALFORMED, "retry_after_ms": 0}).encode() + b"\n"
        self.gateway.telemetry.add("bytes_out", len(line))
        return line

    async def stop(self) -> None:
        """Stop accepting, let in-flight requests finish, then flush telemetry."""
        self._closing = True
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        # idle connections are parked in readline; closing them ends the handler.
        # busy ones finish their current request and then see _closing.
        for w in list(self._writers - self._busy):
            w.close()
        pending = [t for t in self._handlers if not t.done()]
        if pending:
            _, still = await asyncio.wait(pending, timeout=self.drain_timeout)
            for t in still:
                t.cancel()
        self.flush_telemetry()

    def flush_telemetry(self) -> None:
        if self.telemetry_path is not None:
            self.telemetry_path.write_text(json.dumps(self.gateway.telemetry_snapshot(), indent=2, sort_keys=True))


async def serve(gateway: Gateway, host: str, port: int, stop: asyncio.Event,
                telemetry_path: Optional[Path] = None) -> GatewayServer:
    """Run until ``stop`` is set, then shut down gracefully."""
    server = GatewayServer(gateway, host, port, telemetry_path=telemetry_path)
    await server.start()
    try:
        await stop.wait()
    finally:
        await server.stop()
    return server
