"""Point-to-point channels between the three parties, with instrumentation.

Two interchangeable backends: an in-process queue mesh (run-local, tests)
and TCP (run-party).  Byte accounting counts payload bytes only; the 8-byte
frame header is reported separately so measured traffic maps directly onto
"ring elements sent".

Wire frame: u32 LE payload length, u32 LE round tag, payload.
"""

from __future__ import annotations

import hashlib
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError, FramingError, TransportError

PARTIES = (1, 2, 3)
PROTOCOL_VERSION = 1

_FRAME = struct.Struct("<II")
_MAX_FRAME = 1 << 30
_HANDSHAKE_MAGIC = b"SQ8P"
_HANDSHAKE = struct.Struct("<4sBHH")  # magic, party id, k, protocol version


def next_party(i: int) -> int:
    """Index wrap-around: next(i) = 1 + (i mod 3)."""
    return 1 + (i % 3)


def prev_party(i: int) -> int:
    return 1 + ((i + 1) % 3)


def check_party(i: int) -> int:
    if i not in PARTIES:
        raise ConfigError(f"party id must be 1, 2 or 3, got {i}")
    return i


@dataclass
class WireMessage:
    round_tag: int
    payload: bytes

    @property
    def length(self) -> int:
        return len(self.payload)


@dataclass
class CommStats:
    """Per-party traffic counters; monotone, reset only at session start."""

    party: int
    bytes_sent: dict[int, int] = field(default_factory=dict)
    frames: dict[int, int] = field(default_factory=dict)
    rounds: int = 0

    def __post_init__(self):
        for p in PARTIES:
            if p != self.party:
                self.bytes_sent.setdefault(p, 0)
                self.frames.setdefault(p, 0)
        self._transcripts = {p: hashlib.sha256() for p in self.bytes_sent}

    def record_send(self, peer: int, payload: bytes) -> None:
        self.bytes_sent[peer] += len(payload)
        self.frames[peer] += 1
        self._transcripts[peer].update(len(payload).to_bytes(8, "little"))
        self._transcripts[peer].update(payload)

    def total_bytes(self) -> int:
        return sum(self.bytes_sent.values())

    def total_frames(self) -> int:
        return sum(self.frames.values())

    def snapshot(self) -> tuple[int, int, int]:
        return self.total_bytes(), self.total_frames(), self.rounds

    def transcript_digest(self) -> dict[int, str]:
        return {p: h.hexdigest() for p, h in self._transcripts.items()}

    def to_json(self) -> list[dict]:
        """One record per peer, plus framing overhead as its own field."""
        return [
            {
                "party": self.party,
                "peer": peer,
                "bytes_sent": self.bytes_sent[peer],
                "frames": self.frames[peer],
                "frame_overhead_bytes": _FRAME.size * self.frames[peer],
                "rounds": self.rounds,
                "transcript_sha256": self._transcripts[peer].hexdigest(),
            }
            for peer in sorted(self.bytes_sent)
        ]


class Channel:
    """One endpoint of a reliable ordered channel to a single peer."""

    def __init__(self, party: int, peer: int, stats: CommStats):
        self.party = party
        self.peer = peer
        self.stats = stats

    def _push(self, msg: WireMessage) -> None:
        raise NotImplementedError

    def _pull(self) -> WireMessage:
        raise NotImplementedError

    def send(self, payload: bytes, round_tag: int | None = None) -> None:
        tag = self.stats.rounds if round_tag is None else round_tag
        self._push(WireMessage(tag, payload))
        self.stats.record_send(self.peer, payload)

    def recv(self) -> bytes:
        return self._pull().payload

    def recv_message(self) -> WireMessage:
        return self._pull()

    def exchange(self, payload: bytes) -> bytes:
        """Symmetric one-round step: both sides send, then receive."""
        self.stats.rounds += 1
        self.send(payload)
        return self.recv()

    def close(self) -> None:
        pass


class QueueChannel(Channel):
    """In-process backend; counts exactly like the TCP backend."""

    def __init__(self, party, peer, stats, outbox: "_Box", inbox: "_Box",
                 timeout: float = 60.0):
        super().__init__(party, peer, stats)
        self._out = outbox
        self._in = inbox
        self.timeout = timeout

    def _push(self, msg: WireMessage) -> None:
        self._out.put(msg, self.peer)

    def _pull(self) -> WireMessage:
        return self._in.get(self.timeout, self.peer)

    def close(self) -> None:
        self._out.close()
        self._in.close()


class _Box:
    """FIFO with blocking get; closing wakes any blocked reader."""

    def __init__(self):
        self._q: deque[WireMessage] = deque()
        self._cv = threading.Condition()
        self._closed = False

    def put(self, msg: WireMessage, peer: int) -> None:
        with self._cv:
            if self._closed:
                raise TransportError("channel closed", peer)
            self._q.append(msg)
            self._cv.notify()

    def get(self, timeout: float, peer: int) -> WireMessage:
        deadline = time.monotonic() + timeout
        with self._cv:
            while not self._q:
                if self._closed:
                    raise TransportError("peer closed mid-protocol", peer)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportError(f"recv timed out after {timeout}s", peer)
                self._cv.wait(remaining)
            return self._q.popleft()

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()


class SocketChannel(Channel):
    """TCP backend with explicit framing."""

    def __init__(self, party, peer, stats, sock: socket.socket):
        super().__init__(party, peer, stats)
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _push(self, msg: WireMessage) -> None:
        if len(msg.payload) > _MAX_FRAME:
            raise FramingError(f"frame too large: {len(msg.payload)}", self.peer)
        try:
            self._sock.sendall(_FRAME.pack(len(msg.payload), msg.round_tag))
            self._sock.sendall(msg.payload)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}", self.peer) from exc

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            try:
                r = self._sock.recv_into(view[got:])
            except OSError as exc:
                raise TransportError(f"recv failed: {exc}", self.peer) from exc
            if r == 0:
                raise TransportError("peer closed mid-protocol", self.peer)
            got += r
        return bytes(buf)

    def _pull(self) -> WireMessage:
        header = self._recv_exact(_FRAME.size)
        length, tag = _FRAME.unpack(header)
        if length > _MAX_FRAME:
            raise FramingError(f"declared length {length} exceeds limit", self.peer)
        return WireMessage(tag, self._recv_exact(length))

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class PartyHub:
    """A party's two channel endpoints plus round accounting.

    All protocol communication goes through step(); each call is one
    synchronous protocol round and bumps the rounds counter exactly once.
    """

    def __init__(self, party: int, channels: dict[int, Channel], stats: CommStats):
        self.party = check_party(party)
        self.channels = channels
        self.stats = stats

    @property
    def next_peer(self) -> int:
        return next_party(self.party)

    @property
    def prev_peer(self) -> int:
        return prev_party(self.party)

    def send(self, peer: int, payload: bytes) -> None:
        self.channels[peer].send(payload)

    def recv(self, peer: int) -> bytes:
        return self.channels[peer].recv()

    def exchange(self, peer: int, payload: bytes) -> bytes:
        return self.channels[peer].exchange(payload)

    def step(self, sends: dict[int, bytes], recvs: list[int]) -> dict[int, bytes]:
        """One protocol round: fire all sends, then collect all receives."""
        self.stats.rounds += 1
        for peer, payload in sends.items():
            self.channels[peer].send(payload)
        return {peer: self.channels[peer].recv() for peer in recvs}

    def shift(self, payload: bytes) -> bytes:
        """Ring-rotation round: send to prev, receive from next (the
        resharing pattern of replicated multiplication)."""
        out = self.step({self.prev_peer: payload}, [self.next_peer])
        return out[self.next_peer]

    def close(self) -> None:
        for ch in self.channels.values():
            ch.close()


def local_mesh(timeout: float = 60.0) -> dict[int, PartyHub]:
    """Three wired-up hubs over in-process queues."""
    boxes = {
        (a, b): _Box() for a in PARTIES for b in PARTIES if a != b
    }  # (sender, receiver)
    hubs = {}
    for p in PARTIES:
        stats = CommStats(p)
        channels = {
            q: QueueChannel(p, q, stats, boxes[(p, q)], boxes[(q, p)], timeout)
            for q in PARTIES
            if q != p
        }
        hubs[p] = PartyHub(p, channels, stats)
    return hubs


def _handshake(sock: socket.socket, party: int, k: int) -> int:
    sock.sendall(_HANDSHAKE.pack(_HANDSHAKE_MAGIC, party, k, PROTOCOL_VERSION))
    raw = b""
    while len(raw) < _HANDSHAKE.size:
        chunk = sock.recv(_HANDSHAKE.size - len(raw))
        if not chunk:
            raise TransportError("peer closed during handshake")
        raw += chunk
    magic, peer, peer_k, version = _HANDSHAKE.unpack(raw)
    if magic != _HANDSHAKE_MAGIC:
        raise FramingError("bad handshake magic")
    if peer_k != k or version != PROTOCOL_VERSION:
        raise ConfigError(
            f"handshake mismatch with party {peer}: "
            f"k {peer_k} vs {k}, version {version} vs {PROTOCOL_VERSION}"
        )
    return peer


def tcp_hub(
    party: int,
    k: int,
    endpoints: dict[int, tuple[str, int]],
    connect_timeout: float = 30.0,
) -> PartyHub:
    """Connect the full mesh over TCP.

    Party i listens on its own endpoint and dials every lower-numbered
    party; peers are identified by the handshake, which also pins (k,
    protocol version).
    """
    check_party(party)
    stats = CommStats(party)
    socks: dict[int, socket.socket] = {}

    listener = None
    expect_accepts = sum(1 for q in PARTIES if q > party)
    if expect_accepts:
        host, port = endpoints[party]
        listener = socket.create_server((host, port), reuse_port=False)
        listener.settimeout(connect_timeout)

    for q in PARTIES:
        if q < party:
            host, port = endpoints[q]
            deadline = time.monotonic() + connect_timeout
            while True:
                try:
                    sock = socket.create_connection((host, port), timeout=5.0)
                    break
                except OSError as exc:
                    if time.monotonic() > deadline:
                        raise TransportError(f"cannot reach {host}:{port}", q) from exc
                    time.sleep(0.05)
            peer = _handshake(sock, party, k)
            if peer != q:
                raise ConfigError(f"dialed party {q} but reached {peer}")
            socks[q] = sock

    try:
        for _ in range(expect_accepts):
            try:
                sock, _addr = listener.accept()
            except socket.timeout as exc:
                raise TransportError("timed out waiting for peers") from exc
            peer = _handshake(sock, party, k)
            if peer in socks or peer == party:
                raise ConfigError(f"duplicate connection from party {peer}")
            socks[peer] = sock
    finally:
        if listener is not None:
            listener.close()

    channels = {q: SocketChannel(party, q, stats, socks[q]) for q in socks}
    return PartyHub(party, channels, stats)
