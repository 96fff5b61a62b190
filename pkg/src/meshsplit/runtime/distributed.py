"""Multi-process mode: one process per node plus a switch process, over TCP.

Every message on a connection is a 4-byte big-endian length followed by the
payload.  Payloads of four or more bytes are bridge frames (P2pFrame on
node-to-node connections, EthFrame on node-to-switch connections).  Shorter
payloads are control messages:

* 1 byte, a cycle marker.  The sender has emitted everything belonging to its
  next cycle.  From a node the byte is a status (``0x01`` once the node is
  done); from the switch it closes the frames arriving at that cycle.
* 2 bytes ``b"\\xffS"``, stop, sent by the switch once every node has stayed
  done for :data:`DONE_WINDOW` consecutive cycles.

Cycle markers let each receiver reconstruct the send cycle of every frame, so
the receiver applies the same link model the in-process fabric would, and the
switch process runs the very same :class:`SwitchedSegment`.  Each node waits
for markers before advancing (switch markers through its current cycle, P2P
peer markers through ``cycle - p2p_latency``); the link latencies are the
lookahead that keeps this from degenerating into per-cycle lockstep.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import logging
import queue
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..fabric import (
    SWITCH_LINK_KEY, Arrival, FabricConfig, LinkModel, SwitchedSegment, link_seed, p2p_link_key,
)
from ..mesh.topology import ConfigError
from ..metrics import MetricsReport, summarize
from ..partition import Path, plan as make_plan
from ..workload import Memtest
from .node import LinkFailure
from .simulated import SimulationTimeout, _kernel_name, build_nodes

log = logging.getLogger(__name__)

MAGIC = b"EMIX"
PROTOCOL_VERSION = 0x0001
ROLE_NODE = 0
ROLE_SWITCH = 1
HANDSHAKE_LEN = 4 + 2 + 1 + 1 + 32
STATUS_BUSY = b"\x00"
STATUS_DONE = b"\x01"
CTRL_STOP = b"\xffS"
DONE_WINDOW = 64
_LEN = struct.Struct(">I")


class PeerUnreachable(ConnectionError):
    """A peer could not be reached, failed its handshake, or went away."""


class ManifestMismatch(RuntimeError):
    """Peers disagree on the manifest (or the config does not match it)."""


def manifest_bytes(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()


def manifest_hash(manifest: dict) -> bytes:
    return hashlib.sha256(manifest_bytes(manifest)).digest()


def default_endpoints(n_nodes: int, host: str = "127.0.0.1", base_port: int = 47000) -> dict:
    return {"switch": f"{host}:{base_port}",
            "nodes": [f"{host}:{base_port + 1 + i}" for i in range(n_nodes)]}


def parse_endpoint(s: str) -> Tuple[str, int]:
    host, _, port = s.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"endpoint {s!r} is not host:port")
    return host, int(port)


def encode_handshake(role: int, index: int, mhash: bytes) -> bytes:
    assert len(mhash) == 32
    return MAGIC + struct.pack(">HBB", PROTOCOL_VERSION, role, index) + mhash


def decode_handshake(msg: bytes) -> Tuple[int, int, bytes]:
    if len(msg) != HANDSHAKE_LEN or msg[:4] != MAGIC:
        raise PeerUnreachable("malformed handshake")
    version, role, index = struct.unpack(">HBB", msg[4:8])
    if version != PROTOCOL_VERSION:
        raise PeerUnreachable(f"protocol version {version:#06x} unsupported")
    return role, index, bytes(msg[8:])


def pack(msgs) -> bytes:
    return b"".join(_LEN.pack(len(m)) + m for m in msgs)


def _read_msg(f) -> Optional[bytes]:
    hdr = f.read(4)
    if len(hdr) < 4:
        return None
    (n,) = _LEN.unpack(hdr)
    body = f.read(n)
    if len(body) < n:
        return None
    return body


class Conn:
    """A framed connection; a reader thread feeds complete messages to a shared queue."""

    def __init__(self, sock: socket.socket, key):
        self.sock = sock
        self.key = key
        self.rfile = sock.makefile("rb")
        self.closed = False
        self.broken = False
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def recv_one(self, timeout: float) -> Optional[bytes]:
        self.sock.settimeout(timeout)
        try:
            return _read_msg(self.rfile)
        except (socket.timeout, OSError):
            return None
        finally:
            self.sock.settimeout(None)

    def send(self, msgs) -> None:
        if self.broken:
            return
        try:
            self.sock.sendall(pack(msgs))
        except OSError:
            self.broken = True

    def start_reader(self, q: "queue.Queue") -> None:
        def run():
            while True:
                try:
                    msg = _read_msg(self.rfile)
                except OSError:
                    msg = None
                q.put((self.key, msg))
                if msg is None:
                    return
        threading.Thread(target=run, daemon=True, name=f"reader-{self.key}").start()

    def finish(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _handshake(conn: Conn, role: int, index: int, mhash: bytes, deadline: float,
               expect_role: int, expect_index: Optional[int] = None) -> int:
    conn.send([encode_handshake(role, index, mhash)])
    msg = conn.recv_one(max(deadline - time.monotonic(), 0.01))
    if msg is None:
        raise PeerUnreachable(f"no handshake from {conn.key}")
    prole, pindex, phash = decode_handshake(msg)
    if prole != expect_role or (expect_index is not None and pindex != expect_index):
        raise PeerUnreachable(f"unexpected peer role={prole} index={pindex}")
    if phash != mhash:
        raise ManifestMismatch(f"manifest hash of peer {pindex} (role {prole}) differs")
    return pindex


def _connect(endpoint: str, deadline: float) -> socket.socket:
    host, port = parse_endpoint(endpoint)
    last = None
    while time.monotonic() < deadline:
        try:
            return socket.create_connection((host, port), timeout=max(deadline - time.monotonic(), 0.01))
        except OSError as e:
            last = e
            time.sleep(0.05)
    raise PeerUnreachable(f"cannot connect to {endpoint}: {last}")


def _listen(endpoint: str) -> socket.socket:
    host, port = parse_endpoint(endpoint)
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(64)
    return srv


def _accept(srv: socket.socket, deadline: float) -> socket.socket:
    srv.settimeout(max(deadline - time.monotonic(), 0.01))
    try:
        s, _ = srv.accept()
    except socket.timeout:
        raise PeerUnreachable(f"no peer connected to {srv.getsockname()} in time")
    s.settimeout(None)
    return s


def check_manifest(cfg, manifest: dict) -> None:
    want = manifest.get("config_sha256")
    if want != cfg.digest():
        raise ManifestMismatch("config does not match the manifest's config_sha256")
    eps = manifest.get("endpoints") or {}
    n = cfg.partition.node_count
    if "switch" not in eps or len(eps.get("nodes", [])) != n:
        raise ConfigError("manifest endpoints must name the switch and every node")


@dataclass
class DistResult:
    report: MetricsReport
    trace: List[tuple] = field(default_factory=list)
    words_sent: Dict = field(default_factory=dict)
    words_delivered: Dict = field(default_factory=dict)


def run_node(cfg, manifest: dict, index: int, kernel: Optional[str] = None,
             timeout_s: Optional[float] = None) -> DistResult:
    check_manifest(cfg, manifest)
    if isinstance(cfg.workload, Memtest) and cfg.workload.sequential_cores:
        raise ConfigError("workload.sequential_cores is not supported in distributed mode")
    n_nodes = cfg.partition.node_count
    if not 0 <= index < n_nodes:
        raise ConfigError(f"node index {index} out of range")
    timeout_s = timeout_s or cfg.run.peer_timeout_s
    mhash = manifest_hash(manifest)
    eps = manifest["endpoints"]
    fab: FabricConfig = cfg.fabric
    pl = make_plan(cfg.mesh, cfg.partition)
    (node,) = build_nodes(pl, cfg.mesh, cfg.workload, cfg.bridge, cfg.chipset, kernel, only=index)

    peers = sorted(b if a == index else a for a, b in cfg.partition.p2p_pairs if index in (a, b))
    lower = [p for p in peers if p < index]
    deadline = time.monotonic() + timeout_s
    conns: Dict = {}
    srv = _listen(eps["nodes"][index]) if lower else None
    try:
        sw = Conn(_connect(eps["switch"], deadline), "switch")
        conns["switch"] = sw
        _handshake(sw, ROLE_NODE, index, mhash, deadline, ROLE_SWITCH)
        for p in peers:
            if p > index:
                c = Conn(_connect(eps["nodes"][p], deadline), p)
                _handshake(c, ROLE_NODE, index, mhash, deadline, ROLE_NODE, p)
                conns[p] = c
        for _ in lower:
            c = Conn(_accept(srv, deadline), None)
            c.key = _handshake(c, ROLE_NODE, index, mhash, deadline, ROLE_NODE)
            if c.key not in lower or c.key in conns:
                raise PeerUnreachable(f"unexpected P2P peer {c.key}")
            conns[c.key] = c
    except BaseException:
        for c in conns.values():
            c.close()
        raise
    finally:
        if srv is not None:
            srv.close()
    log.info("node %d connected (p2p peers %s)", index, peers)

    inbox: "queue.Queue" = queue.Queue()
    for c in conns.values():
        c.start_reader(inbox)
    links = {p: LinkModel(fab.p2p_latency, fab.p2p_bandwidth, 0.0,
                          link_seed(fab.seed, "p2p", p, index), port=index) for p in peers}
    sw_through = -1
    peer_through = {p: -1 for p in peers}
    closed = set()
    heap: List[Arrival] = []
    seq = 0
    stopped = False

    def handle(key, msg):
        nonlocal sw_through, seq, stopped
        if msg is None:
            if key == "switch" and not stopped:
                raise PeerUnreachable(f"node {index}: switch connection lost")
            closed.add(key)
            return
        if key == "switch":
            if len(msg) == 1:
                sw_through += 1
            elif msg == CTRL_STOP:
                stopped = True
            else:
                seq += 1
                heapq.heappush(heap, Arrival(sw_through + 1, SWITCH_LINK_KEY, seq, msg))
        else:
            if len(msg) == 1:
                peer_through[key] += 1
            else:
                ev = links[key].send(msg, peer_through[key] + 1)
                seq += 1
                heapq.heappush(heap, Arrival(ev.arrival, p2p_link_key(key), seq, msg, key))

    t = 0
    try:
        while True:
            while not stopped and (sw_through < t or any(
                    peer_through[p] < t - fab.p2p_latency for p in peers)):
                try:
                    key, msg = inbox.get(timeout=timeout_s)
                except queue.Empty:
                    raise PeerUnreachable(f"node {index}: no progress from peers for {timeout_s}s")
                handle(key, msg)
            if stopped:
                break
            if t >= cfg.run.max_cycles:
                raise SimulationTimeout(cfg.run.max_cycles)
            arrivals = []
            while heap and heap[0].arrival <= t:
                arrivals.append(heapq.heappop(heap))
            out = node.step(t, arrivals)
            to_sw, to_peer = [], {p: [] for p in peers}
            for o in out:
                (to_sw if o.path is Path.SWITCHED else to_peer[o.peer]).append(o.frame)
            to_sw.append(STATUS_DONE if node.done() else STATUS_BUSY)
            sw.send(to_sw)
            for p, msgs in to_peer.items():
                msgs.append(STATUS_BUSY)
                conns[p].send(msgs)
            t += 1
    except (SimulationTimeout, LinkFailure) as e:
        e.result = _node_result(node, t, fab.seed, pl, kernel, str(e))
        raise
    finally:
        for c in conns.values():
            c.finish()
        _drain(inbox, set(conns), timeout_s, closed)
        for c in conns.values():
            c.close()
    log.info("node %d stopped at cycle %d", index, t)
    return _node_result(node, t, fab.seed, pl, kernel)


def _drain(inbox, keys, timeout_s, closed) -> None:
    """Wait for peers to close their side so no data is lost to a reset."""
    waiting = set(keys) - set(closed)
    deadline = time.monotonic() + min(timeout_s, 5.0)
    while waiting and time.monotonic() < deadline:
        try:
            key, msg = inbox.get(timeout=max(deadline - time.monotonic(), 0.01))
        except queue.Empty:
            return
        if msg is None:
            waiting.discard(key)


def _node_result(node, cycles, seed, pl, kernel, error=None) -> DistResult:
    rep = summarize([node], None, cycles, mode="dist", seed=seed, node=node.index, plan=pl,
                    kernel=_kernel_name(kernel))
    if error:
        rep.errors.append(error)
    return DistResult(rep, list(node.trace), dict(node.words_sent), dict(node.words_delivered))


def run_switch(cfg, manifest: dict, timeout_s: Optional[float] = None) -> DistResult:
    check_manifest(cfg, manifest)
    timeout_s = timeout_s or cfg.run.peer_timeout_s
    mhash = manifest_hash(manifest)
    n = cfg.partition.node_count
    fab: FabricConfig = cfg.fabric
    deadline = time.monotonic() + timeout_s
    srv = _listen(manifest["endpoints"]["switch"])
    conns: Dict[int, Conn] = {}
    try:
        while len(conns) < n:
            c = Conn(_accept(srv, deadline), None)
            try:
                c.key = _handshake(c, ROLE_SWITCH, 0, mhash, deadline, ROLE_NODE)
            except ManifestMismatch:
                c.close()
                raise
            if not 0 <= c.key < n or c.key in conns:
                c.close()
                raise PeerUnreachable(f"unexpected node index {c.key}")
            conns[c.key] = c
    except BaseException:
        for c in conns.values():
            c.close()
        raise
    finally:
        srv.close()
    log.info("switch: %d nodes connected", n)

    inbox: "queue.Queue" = queue.Queue()
    for c in conns.values():
        c.start_reader(inbox)
    seg = SwitchedSegment(n, fab)
    through = [-1] * n
    status: List[deque] = [deque() for _ in range(n)]
    pending: List[deque] = [deque() for _ in range(n)]
    emitted = [-1] * n
    s_min = -1
    streak = 0
    horizon_gap = fab.switch_forwarding_latency + fab.switch_link_latency

    def advance():
        nonlocal s_min, streak
        new_min = min(through)
        while s_min < new_min:
            s_min += 1
            flags = [st.popleft() for st in status]
            if all(flags):
                streak += 1
            else:
                streak = 0
        for ev in seg.process(s_min + fab.switch_link_latency):
            pending[ev.port].append((ev.arrival, ev.frame))
        horizon = s_min + fab.switch_link_latency + horizon_gap
        for k, c in conns.items():
            msgs = []
            q = pending[k]
            for cyc in range(emitted[k] + 1, horizon + 1):
                while q and q[0][0] == cyc:
                    msgs.append(q.popleft()[1])
                msgs.append(STATUS_BUSY)
            assert not q or q[0][0] > horizon
            emitted[k] = max(emitted[k], horizon)
            if msgs:
                c.send(msgs)

    stopped_at = None
    try:
        advance()
        while True:
            try:
                key, msg = inbox.get(timeout=timeout_s)
            except queue.Empty:
                raise PeerUnreachable(f"switch: no progress from nodes for {timeout_s}s")
            if msg is None:
                raise PeerUnreachable(f"switch: node {key} connection lost")
            if len(msg) == 1:
                through[key] += 1
                status[key].append(msg == STATUS_DONE)
                if through[key] == min(through):
                    advance()
                if (streak >= DONE_WINDOW and seg.pending() == 0
                        and not any(pending)):
                    stopped_at = s_min
                    break
            else:
                seg.send(key, msg, through[key] + 1)
        for c in conns.values():
            c.send([CTRL_STOP])
            c.finish()
        _drain(inbox, set(conns), timeout_s, ())
    finally:
        for c in conns.values():
            c.close()
    log.info("switch stopped at cycle %d", stopped_at)
    rep = MetricsReport(mode="dist", seed=fab.seed, cycles_simulated=stopped_at + 1)
    rep.switch = seg.counters()
    rep.path_bytes = {Path.SWITCHED.value: seg.bytes_sent}
    return DistResult(rep)
