"""Request/response transport with byte and latency accounting.

:class:`SimLink` calls a prover session in-process and advances a simulated
clock; :class:`TcpLink` talks to :func:`serve_tcp` over a socket.  Both send
the same frames and feed the same :class:`Meter`.
"""

from __future__ import annotations

import hashlib
import logging
import socket
import socketserver
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol

from .wire import HEADER, HEADER_SIZE, MAX_PAYLOAD, Message, WireError, decode_frame

log = logging.getLogger(__name__)


class ProverTimeout(Exception):
    """The prover did not answer in time (silence, drop or closed connection)."""

    def __init__(self, name: str, reason: str = "timeout"):
        super().__init__(f"{name}: {reason}")
        self.name = name


class Handler(Protocol):
    def handle(self, frame: bytes) -> bytes | None: ...


@dataclass(frozen=True)
class LinkConfig:
    latency_ms: float = 20.0
    down_bps: int = 100_000_000
    up_bps: int = 10_000_000
    timeout_ms: float = 5_000.0

    def __post_init__(self):
        if self.down_bps <= 0 or self.up_bps <= 0:
            raise ValueError("link rates must be positive")
        if self.latency_ms < 0:
            raise ValueError("latency cannot be negative")

    def transfer_us(self, nbytes: int, rate_bps: int) -> int:
        return round(self.latency_ms * 1000) + nbytes * 8 * 1_000_000 // rate_bps


@dataclass
class Meter:
    """Verifier-side totals; ``bytes_in`` is download, ``bytes_out`` upload."""

    bytes_in: int = 0
    bytes_out: int = 0
    messages: int = 0
    rounds: int = 0
    clock_us: int = 0
    keep_transcript: bool = False
    transcript: list[tuple[str, str, bytes]] = field(default_factory=list)
    bytes_in_by_tag: Counter = field(default_factory=Counter)
    _digest: "hashlib._Hash" = field(default_factory=hashlib.sha256, repr=False)

    def record(self, peer: str, direction: str, frame: bytes) -> None:
        if direction == "down":
            self.bytes_in += len(frame)
            self.bytes_in_by_tag[frame[4] if len(frame) > 4 else -1] += len(frame)
        else:
            self.bytes_out += len(frame)
        self.messages += 1
        entry = f"{peer}|{direction}|{len(frame)}|".encode()
        self._digest.update(entry + frame)
        if self.keep_transcript:
            self.transcript.append((peer, direction, frame))

    @property
    def transcript_digest(self) -> str:
        return self._digest.hexdigest()

    @property
    def elapsed_ms(self) -> float:
        return self.clock_us / 1000


class Link:
    """One verifier-to-prover channel."""

    def __init__(self, name: str, meter: Meter | None = None, config: LinkConfig | None = None):
        self.name = name
        self.meter = meter if meter is not None else Meter()
        self.config = config or LinkConfig()

    def _exchange(self, frame: bytes, expect_reply: bool) -> bytes | None:
        raise NotImplementedError

    def request(self, msg: Message) -> Message:
        frame = msg.frame()
        self._account(frame, "up")
        self.meter.rounds += 1
        reply = self._exchange(frame, True)
        if reply is None:
            self.meter.clock_us += round(self.config.timeout_ms * 1000)
            raise ProverTimeout(self.name)
        self._account(reply, "down")
        return decode_frame(reply)

    def notify(self, msg: Message) -> None:
        frame = msg.frame()
        self._account(frame, "up")
        try:
            self._exchange(frame, False)
        except ProverTimeout:
            pass

    def _account(self, frame: bytes, direction: str) -> None:
        rate = self.config.down_bps if direction == "down" else self.config.up_bps
        self.meter.clock_us += self.config.transfer_us(len(frame), rate)
        self.meter.record(self.name, direction, frame)

    def close(self) -> None:
        pass


class SimLink(Link):
    """In-process link; ``drop_after`` silences the prover after that many requests."""

    def __init__(
        self,
        handler: Handler,
        name: str = "prover",
        meter: Meter | None = None,
        config: LinkConfig | None = None,
        drop_after: int | None = None,
    ):
        super().__init__(name, meter, config)
        self.handler = handler
        self.drop_after = drop_after
        self.sent = 0

    def _exchange(self, frame, expect_reply):
        if expect_reply:
            self.sent += 1
            if self.drop_after is not None and self.sent > self.drop_after:
                return None
        return self.handler.handle(frame)


def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes:
    header = recv_exact(sock, HEADER_SIZE)
    length, _ = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise WireError("frame too large")
    return header + recv_exact(sock, length)


class TcpLink(Link):
    def __init__(
        self,
        host: str,
        port: int,
        name: str | None = None,
        meter: Meter | None = None,
        config: LinkConfig | None = None,
    ):
        super().__init__(name or f"{host}:{port}", meter, config)
        self.address = (host, port)
        self.sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self.sock is None:
            try:
                self.sock = socket.create_connection(self.address, timeout=self.config.timeout_ms / 1000)
            except OSError as exc:
                raise ProverTimeout(self.name, f"connect failed: {exc}") from None
        return self.sock

    def _exchange(self, frame, expect_reply):
        sock = self._connect()
        try:
            sock.sendall(frame)
            return read_frame(sock) if expect_reply else None
        except (OSError, ConnectionError) as exc:
            self.close()
            if expect_reply:
                log.info("prover %s dropped: %s", self.name, exc)
                return None
            raise ProverTimeout(self.name, str(exc)) from None

    def close(self) -> None:
        if self.sock is not None:
            try:
                self.sock.close()
            finally:
                self.sock = None


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self):
        session = self.server.session
        while True:
            try:
                frame = read_frame(self.request)
            except (ConnectionError, OSError, WireError):
                return
            reply = session.handle(frame)
            if reply is not None:
                self.request.sendall(reply)


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


def serve_tcp(session: Handler, host: str = "127.0.0.1", port: int = 0) -> _Server:
    """Serve ``session`` on a background thread; one connection per verifier.

    Use ``server.server_address`` for the bound port and ``server.shutdown()``
    to stop.
    """
    server = _Server((host, port), _FrameHandler)
    server.session = session
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
