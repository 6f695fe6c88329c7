"""Socket shell around LabNode: UDP discovery datagrams, TCP data connections.

Discovery is best-effort: every node periodically sends its ANNOUNCE
frames to a small set of well-known localhost ports (or the configured
peer endpoints). Subscriptions, chunks, clock exchanges, and events run
over reliable TCP connections opened toward the endpoint advertised in
each stream's ANNOUNCE metadata.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import replace as dc_replace
from typing import Callable

from . import wire
from .config import DEFAULT_PORT_RANGE, NodeConfig, parse_endpoint
from .errors import Timeout
from .streams import Inlet, StreamHub, StreamInfo
from .timebase import ClockModel
from .transport import LabNode, LinkMetrics, invert_model

_RECV_SIZE = 65536


def _bind_udp(config: NodeConfig) -> tuple[socket.socket, int]:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    if config.port is not None:
        sock.bind((config.host, config.port))
        return sock, config.port
    lo, hi = DEFAULT_PORT_RANGE
    for port in range(lo, hi + 1):
        try:
            sock.bind((config.host, port))
            return sock, port
        except OSError:
            continue
    sock.bind((config.host, 0))
    return sock, sock.getsockname()[1]


class SocketNode:
    """A running lab node on real sockets."""

    def __init__(self, config: NodeConfig | None = None, lab_id: str | None = None):
        config = config or NodeConfig()
        if lab_id is not None:
            config = dc_replace(config, lab_id=lab_id)
        self._udp, port = _bind_udp(config)
        self.config = dc_replace(config, port=port)
        self.endpoint = f"{self.config.host}:{port}"
        self._tcp = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._tcp.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._tcp.bind((self.config.host, port))
        self._tcp.listen(16)

        self.hub = StreamHub()
        self._lock = threading.RLock()  # serializes LabNode access
        self.node = LabNode(node_id=self.endpoint, lab_id=self.config.lab_id,
                            hub=self.hub, clock=time.time, send=self._send)
        self._conns: dict[str, socket.socket] = {}
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._pong_seen = threading.Condition()

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "SocketNode":
        for target in (self._announce_loop, self._udp_loop, self._accept_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def close(self) -> None:
        self._stop.set()
        for sock in (self._udp, self._tcp):
            try:
                sock.close()
            except OSError:
                pass
        with self._lock:
            for conn in self._conns.values():
                try:
                    conn.close()
                except OSError:
                    pass

    def __enter__(self) -> "SocketNode":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    # -- outlets with advertised endpoint -------------------------------------

    def create_outlet(self, info: StreamInfo):
        meta = dict(info.metadata)
        meta["endpoint"] = self.endpoint
        info = dc_replace(info, metadata=tuple(sorted(meta.items())),
                          lab_id=info.lab_id or self.config.lab_id)
        with self._lock:
            return self.node.create_outlet(info)

    # -- discovery -------------------------------------------------------------

    def _announce_loop(self) -> None:
        peers = self.config.default_peer_endpoints()
        while not self._stop.is_set():
            with self._lock:
                frames = self.node.announce_frames()
            for peer in peers:
                addr = parse_endpoint(peer)
                for frame in frames:
                    try:
                        self._udp.sendto(frame, addr)
                    except OSError:
                        pass
            self._stop.wait(self.config.announce_interval)

    def _udp_loop(self) -> None:
        while not self._stop.is_set():
            try:
                data, addr = self._udp.recvfrom(_RECV_SIZE)
            except OSError:
                return
            peer = f"udp:{addr[0]}:{addr[1]}"
            with self._lock:
                try:
                    self.node.handle_frame(peer, data)
                except wire.DecodeError:
                    pass

    def discover(self, predicate: Callable[[StreamInfo], bool] = lambda _: True,
                 wait: float = 2.0) -> list[StreamInfo]:
        """Streams visible after listening for `wait` seconds of announces."""
        deadline = time.time() + wait
        while time.time() < deadline:
            time.sleep(0.05)
        with self._lock:
            return self.node.resolve(predicate)

    # -- TCP data path ---------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._tcp.accept()
            except OSError:
                return
            peer = f"tcp:{addr[0]}:{addr[1]}"
            with self._lock:
                self._conns[peer] = conn
            t = threading.Thread(target=self._conn_loop, args=(peer, conn), daemon=True)
            t.start()
            self._threads.append(t)

    def _conn_loop(self, peer: str, conn: socket.socket) -> None:
        buf = wire.FrameBuffer()
        while not self._stop.is_set():
            try:
                data = conn.recv(_RECV_SIZE)
            except OSError:
                break
            if not data:
                break
            try:
                frames = buf.feed(data)
            except wire.DecodeError:
                break
            for frame in frames:
                with self._lock:
                    try:
                        self.node.handle_frame(peer, frame)
                    except Exception:
                        pass
                if frame[5:6] == bytes([wire.T_CLOCK_PONG]):
                    with self._pong_seen:
                        self._pong_seen.notify_all()
        with self._lock:
            self._conns.pop(peer, None)
            self.node._peer_gone(peer)

    def _connect(self, endpoint: str) -> str:
        peer = f"tcp-out:{endpoint}"
        with self._lock:
            if peer in self._conns:
                return peer
        conn = socket.create_connection(parse_endpoint(endpoint), timeout=5.0)
        with self._lock:
            self._conns[peer] = conn
        t = threading.Thread(target=self._conn_loop, args=(peer, conn), daemon=True)
        t.start()
        self._threads.append(t)
        return peer

    def _send(self, peer: str, data: bytes) -> None:
        if peer.startswith("udp:"):
            _, host, port = peer.split(":")
            try:
                self._udp.sendto(data, (host, int(port)))
            except OSError:
                pass
            return
        conn = self._conns.get(peer)
        if conn is None:
            return
        try:
            conn.sendall(data)
        except OSError:
            pass

    # -- high-level operations -------------------------------------------------

    def subscribe(self, info: StreamInfo, *, lossless: bool = False,
                  model: ClockModel | None = None,
                  sync_exchanges: int = 10) -> Inlet:
        """Subscribe to a stream; remote links get clock-synced first."""
        with self._lock:
            local = self.node.owner_of(info.uid) is None and \
                self.hub.get_outlet(info.uid) is not None
        if local:
            with self._lock:
                return self.node.subscribe(info.uid, lossless=lossless, model=model)
        endpoint = info.metadata_dict.get("endpoint")
        if endpoint is None:
            raise KeyError(f"stream {info.uid} has no advertised endpoint")
        peer = self._connect(endpoint)
        if model is None:
            model = invert_model(self.clock_sync(peer, exchanges=sync_exchanges))
        with self._lock:
            # route through the TCP peer rather than the UDP announce source
            entry = self.node._cache[info.uid]
            self.node._cache[info.uid] = type(entry)(entry.info, peer, entry.last_seen)
            return self.node.subscribe(info.uid, lossless=lossless, model=model)

    def clock_sync(self, peer_or_endpoint: str, exchanges: int = 10,
                   spacing: float = 0.05) -> ClockModel:
        """Ping a peer repeatedly and fit the clock model for the link."""
        peer = peer_or_endpoint if peer_or_endpoint in self._conns \
            else self._connect(peer_or_endpoint)
        for _ in range(exchanges):
            with self._lock:
                self.node.send_ping(peer)
            with self._pong_seen:
                self._pong_seen.wait(timeout=spacing)
        deadline = time.time() + 1.0
        while time.time() < deadline:
            with self._lock:
                state = self.node.links.get(peer)
                if state and len(state.estimates) >= max(2, exchanges // 2):
                    break
            time.sleep(0.01)
        with self._lock:
            state = self.node.links.get(peer)
            if not state or len(state.estimates) < 2:
                raise Timeout(f"clock sync with {peer} failed")
            return self.node.fit_link_model(peer)

    def measure(self, peer: str, window: float = 60.0) -> LinkMetrics:
        with self._lock:
            return self.node.measure_link(peer, window)

    def send_event(self, endpoint: str, payload: dict) -> None:
        peer = self._connect(endpoint)
        with self._lock:
            self.node.send_event(peer, payload)
