"""One emulation node: a sub-mesh plus its boundary transport and bridges.

Per-cycle order inside :meth:`Node.step`:

1. frames arriving this cycle are deframed and demuxed into egress queues
2. egress queues feed boundary router inputs (one flit per channel per cycle)
3. new packets enter the network interfaces; each NI injects one flit per plane
4. routers advance; ejected packets are traced, chipset requests served
5. boundary flits are muxed into the CDC FIFO toward each peer
6. bridges emit frames (ACKs, retransmissions, data, credit returns)
"""
from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from ..bridge import (
    MAX_FRAME_WORDS, CorruptFrame, EthBridge, GiveUp, P2pBridge, WrongDestination,
    eth_decapsulate, mac_node, node_mac,
)
from ..fabric import Arrival
from ..mesh.engine import MeshEngine, Rect
from ..mesh.flit import Flit, FlitKind, Packet, TileCoord, decode_packet, encode_packet
from ..mesh.topology import PORT_DELTA, ConfigError, MeshConfig, Port, xy_path
from ..partition import CutLink, Path, Plan
from ..transport import CdcFifo, Demux, Mux, StreamWord
from .chipset import ChipsetModel, chipset_service

log = logging.getLogger(__name__)


class LinkFailure(RuntimeError):
    """Switched-path retransmission gave up."""


@dataclass(frozen=True)
class BridgeConfig:
    window: int = 32
    timeout_cycles: int = 1024
    max_retries: int = 16
    batch_words: int = MAX_FRAME_WORDS
    flush_deadline_cycles: int = 8
    p2p_buffer_words: int = 64
    cdc_depth: int = 32
    push_period: int = 1
    pop_period: int = 1

    def __post_init__(self):
        errors = []
        for name in ("window", "timeout_cycles", "p2p_buffer_words", "cdc_depth",
                     "push_period", "pop_period"):
            if getattr(self, name) < 1:
                errors.append(f"bridge.{name} must be >= 1")
        if self.max_retries < 0:
            errors.append("bridge.max_retries must be >= 0")
        if self.flush_deadline_cycles < 0:
            errors.append("bridge.flush_deadline_cycles must be >= 0")
        if not 1 <= self.batch_words <= MAX_FRAME_WORDS:
            errors.append(f"bridge.batch_words must be in 1..{MAX_FRAME_WORDS}")
        if errors:
            raise ConfigError(errors)


@dataclass
class Outgoing:
    path: Path
    peer: int       # destination node for P2P; -1 for switched (MAC decides)
    frame: bytes


class _TxStream:
    def __init__(self, peer, path, channel_ids, cfg: BridgeConfig):
        self.peer = peer
        self.path = path
        self.mux = Mux(channel_ids)
        self.cdc = CdcFifo(cfg.cdc_depth, cfg.push_period, cfg.pop_period)
        self.slot_of: Dict[int, Tuple[int, int]] = {}


class _RxStream:
    def __init__(self, peer, path, channel_ids):
        self.peer = peer
        self.path = path
        self.demux = Demux(channel_ids)
        self.target: Dict[int, Tuple[int, int]] = {}


class Node:
    def __init__(
        self,
        index: int,
        mesh: MeshConfig,
        rect: Rect,
        gateway: TileCoord,
        driver,
        plan: Optional[Plan] = None,
        bridge_cfg: BridgeConfig = BridgeConfig(),
        chipset: Optional[ChipsetModel] = None,
        kernel: Optional[str] = None,
        record_links: bool = False,
        check_credits: bool = False,
        record_words: bool = True,
        inject_times: Optional[dict] = None,
    ):
        self.index = index
        self.mesh = mesh
        self.rect = rect
        self.gateway = gateway
        self.driver = driver
        self.plan = plan
        self.cfg = bridge_cfg
        self.chipset = chipset
        self.mac = node_mac(index)
        self.engine = MeshEngine(mesh, rect, gateway, kernel=kernel, record_links=record_links)
        self.check_credits = check_credits
        self.record_words = record_words
        self.chipset_coord = mesh.chipset_coord
        self.gateway_r = self.engine.index(gateway) if rect.contains(gateway) else None
        if chipset is not None and self.gateway_r is None:
            raise ConfigError(f"chipset node {index} does not own the gateway tile {gateway}")

        n = len(self.engine.coords)
        self.ni: List[List[Deque[Tuple[int, int]]]] = [[deque() for _ in range(3)] for _ in range(n)]
        self._ni_active = set()
        self._reasm: Dict[Tuple[int, int], List[Flit]] = defaultdict(list)
        # shared between nodes in simulated mode so remote ejections find their injection cycle
        self._inject_time = inject_times if inject_times is not None else defaultdict(deque)

        # boundary wiring
        self.tx: Dict[int, _TxStream] = {}
        self.rx: Dict[int, _RxStream] = {}
        self._slot_channel: Dict[Tuple[int, int], Tuple[int, int]] = {}
        self.eth: Dict[int, EthBridge] = {}
        self.p2p: Dict[int, P2pBridge] = {}
        if self.engine.boundary:
            if plan is None:
                raise ConfigError("a node with boundary ports needs a partition plan")
            self._wire_boundary(plan)
        self._egress_active = set()

        # observation
        self.trace: List[tuple] = []
        self.latencies: List[Tuple[int, Optional[str]]] = []
        self.words_sent: Dict[Tuple[int, int, int], List[Tuple[int, int]]] = defaultdict(list)
        self.words_delivered: Dict[Tuple[int, int, int], List[Tuple[int, int]]] = defaultdict(list)
        self.packets_injected = 0
        self.packets_ejected = 0
        self.last_eject_cycle = -1
        self.credit_violations = 0
        self.corrupt_frames = 0
        self.wrong_destination = 0
        self.unknown_channel = 0
        self.frame_bytes_out = {Path.P2P: 0, Path.SWITCHED: 0}
        self._path_cache: Dict[Tuple[TileCoord, TileCoord], Optional[str]] = {}

    # -- construction ----------------------------------------------------
    def _wire_boundary(self, plan: Plan) -> None:
        chans = plan.channels
        out_by_peer = defaultdict(list)
        in_by_peer = defaultdict(list)
        for slot, (tile, port) in enumerate(self.engine.boundary):
            dx, dy = PORT_DELTA[port]
            nb = TileCoord(tile.x + dx, tile.y + dy)
            for p in range(3):
                ch_out = chans.for_cut(CutLink(tile, nb, p))
                out_by_peer[(ch_out.dst_node, ch_out.path)].append((ch_out.channel_id, slot, p))
                self._slot_channel[(slot, p)] = (ch_out.dst_node, ch_out.channel_id)
                ch_in = chans.for_cut(CutLink(nb, tile, p))
                in_by_peer[(ch_in.src_node, ch_in.path)].append((ch_in.channel_id, slot, p))
        for (peer, path), items in sorted(out_by_peer.items()):
            s = _TxStream(peer, path, [c for c, _, _ in items], self.cfg)
            for c, slot, p in items:
                s.slot_of[c] = (slot, p)
            self.tx[peer] = s
        for (peer, path), items in sorted(in_by_peer.items()):
            s = _RxStream(peer, path, [c for c, _, _ in items])
            for c, slot, p in items:
                s.target[c] = (slot, p)
            self.rx[peer] = s
        for peer in sorted(set(self.tx) | set(self.rx)):
            path = (self.tx.get(peer) or self.rx.get(peer)).path
            if path is Path.P2P:
                self.p2p[peer] = P2pBridge(self.index, peer, self.cfg.p2p_buffer_words, self.cfg.batch_words)
            else:
                self.eth[peer] = EthBridge(self.index, peer, self.cfg.window, self.cfg.timeout_cycles,
                                           self.cfg.max_retries, self.cfg.batch_words,
                                           self.cfg.flush_deadline_cycles)

    # -- packet entry and exit -------------------------------------------
    def _enqueue_packet(self, pkt: Packet, t: int, at: Optional[int] = None) -> None:
        r = self.engine.index(pkt.src) if at is None else at
        q = self.ni[r][pkt.plane]
        for f in encode_packet(pkt):
            q.append((f.payload, int(f.kind)))
        self._ni_active.add((r, pkt.plane))
        self._inject_time[(pkt.src, pkt.dest, pkt.plane)].append(t)
        self.packets_injected += 1

    def _crossing_path(self, src: TileCoord, dest: TileCoord) -> Optional[str]:
        key = (src, dest)
        if key in self._path_cache:
            return self._path_cache[key]
        result = None
        if self.plan is not None and self.plan.pmap.node_count > 1:
            pmap = self.plan.pmap
            a = self.gateway if src == self.chipset_coord else src
            b = self.gateway if dest == self.chipset_coord else dest
            tiles = xy_path(a, b)
            kinds = set()
            for u, v in zip(tiles, tiles[1:]):
                nu, nv = pmap.tile_to_node(u), pmap.tile_to_node(v)
                if nu != nv:
                    kinds.add(Path.P2P if self.plan.spec.is_paired(nu, nv) else Path.SWITCHED)
            if kinds:
                result = Path.SWITCHED.value if Path.SWITCHED in kinds else Path.P2P.value
        self._path_cache[key] = result
        return result

    def _on_packet(self, pkt: Packet, t: int) -> None:
        self.trace.append((t, pkt.src.x, pkt.src.y, pkt.dest.x, pkt.dest.y, pkt.plane, pkt.body))
        self.packets_ejected += 1
        self.last_eject_cycle = t
        q = self._inject_time.get((pkt.src, pkt.dest, pkt.plane))
        if q:
            self.latencies.append((t - q.popleft(), self._crossing_path(pkt.src, pkt.dest)))
        if pkt.dest == self.chipset_coord:
            if self.chipset is None:
                raise RuntimeError(f"node {self.index} ejected a chipset packet without a chipset")
            resp = chipset_service(self.chipset, pkt, self.chipset_coord)
            self._enqueue_packet(resp, t + 1, at=self.gateway_r)
        else:
            self.driver.on_eject(pkt, t)

    # -- fabric interface ------------------------------------------------
    def _receive(self, arrivals: List[Arrival], t: int) -> None:
        for a in arrivals:
            if a.via_switch:
                try:
                    ev = eth_decapsulate(a.frame, self.mac)
                except CorruptFrame:
                    self.corrupt_frames += 1
                    continue
                except WrongDestination:
                    self.wrong_destination += 1
                    continue
                peer = mac_node(ev.src_mac)
                bridge = self.eth.get(peer)
                if bridge is None:
                    self.wrong_destination += 1
                    continue
                words = bridge.receive(ev, t)
            else:
                words = self.p2p[a.peer].receive(a.frame)
                peer = a.peer
            if words:
                self._demux(peer, words)

    def _demux(self, peer: int, words) -> None:
        rx = self.rx.get(peer)
        if rx is None:
            self.unknown_channel += len(words)
            return
        for w in words:
            if not rx.demux.deliver(w):
                self.unknown_channel += 1
                continue
            self._egress_active.add((peer, w.channel))
            if self.record_words:
                self.words_delivered[(peer, self.index, w.channel)].append((w.data, int(w.kind)))

    def _drain_egress(self) -> None:
        if not self._egress_active:
            return
        for key in sorted(self._egress_active):
            peer, c = key
            rx = self.rx[peer]
            q = rx.demux.queues[c]
            slot, p = rx.target[c]
            f = q[0]
            if self.engine.push_boundary(slot, p, f.payload, int(f.kind)):
                q.popleft()
                if rx.path is Path.P2P:
                    self.p2p[peer].consumed(1)
            if not q:
                self._egress_active.discard(key)

    def _transport(self, t: int) -> None:
        for peer, s in self.tx.items():
            if s.cdc.push_tick(t) and not s.cdc.full():
                w = s.mux.pop()
                if w is not None:
                    s.cdc.push(w)
                    slot, p = s.slot_of[w.channel]
                    self.engine.return_credit(slot, p)
                    if self.record_words:
                        self.words_sent[(self.index, peer, w.channel)].append((w.data, int(w.kind)))
            if s.cdc.pop_tick(t) and s.cdc.occupancy:
                bridge = self.p2p.get(peer) or self.eth[peer]
                if bridge.can_accept():
                    bridge.stage(s.cdc.pop(), t)

    def _bridge_out(self, t: int) -> List[Outgoing]:
        out = []
        for peer, b in self.p2p.items():
            for f in b.tick(t):
                out.append(Outgoing(Path.P2P, peer, f))
                self.frame_bytes_out[Path.P2P] += len(f)
        for peer, b in self.eth.items():
            try:
                frames = b.tick(t)
            except GiveUp as e:
                raise LinkFailure(f"node {self.index} -> node {peer}: {e}") from e
            for f in frames:
                out.append(Outgoing(Path.SWITCHED, -1, f))
                self.frame_bytes_out[Path.SWITCHED] += len(f)
        return out

    # -- the cycle -------------------------------------------------------
    def step(self, t: int, arrivals: List[Arrival] = ()) -> List[Outgoing]:
        eng = self.engine
        if arrivals:
            self._receive(arrivals, t)
        self._drain_egress()

        for pkt in self.driver.generate(t):
            self._enqueue_packet(pkt, t)
        if self._ni_active:
            for key in sorted(self._ni_active):
                r, p = key
                q = self.ni[r][p]
                if eng.local_has_room(r, p):
                    data, kind = q.popleft()
                    eng.inject_flit(r, p, data, kind)
                if not q:
                    self._ni_active.discard(key)

        ej, bd = eng.step(t)
        for r, p, data, kind in ej:
            buf = self._reasm[(r, p)]
            buf.append(Flit(data, FlitKind(kind)))
            if kind & 2:
                pkt = decode_packet(buf)
                del self._reasm[(r, p)]
                self._on_packet(pkt, t)
        for slot, p, data, kind in bd:
            peer, c = self._slot_channel[(slot, p)]
            self.tx[peer].mux.enqueue(c, data, kind)

        if self.tx:
            self._transport(t)
        if self.check_credits:
            self.credit_violations += eng.credit_violations(self.boundary_queue_lengths())
        if self.p2p or self.eth:
            return self._bridge_out(t)
        return []

    # -- state queries ----------------------------------------------------
    def boundary_queue_lengths(self) -> Optional[np.ndarray]:
        if not self.engine.boundary:
            return None
        occ = np.zeros((len(self.engine.boundary), 3), dtype=np.int64)
        for (slot, p), (peer, c) in self._slot_channel.items():
            occ[slot, p] = len(self.tx[peer].mux.queues[c])
        return occ

    def quiescent(self) -> bool:
        return (
            self.engine.idle()
            and not self._ni_active
            and not self._reasm
            and not self._egress_active
            and all(s.mux.pending() == 0 and s.cdc.occupancy == 0 for s in self.tx.values())
            and all(b.quiescent() for b in self.p2p.values())
            and all(b.quiescent() for b in self.eth.values())
        )

    def done(self) -> bool:
        return self.driver.done() and self.quiescent()

    def next_event(self, t: int) -> Optional[int]:
        """Earliest cycle >= t at which :meth:`step` can change state without
        new arrivals; ``None`` if never."""
        if (not self.engine.idle() or self._ni_active or self._egress_active
                or any(s.mux.pending() or s.cdc.occupancy for s in self.tx.values())
                or any(b.staged or b.credit_owed for b in self.p2p.values())):
            return t
        best = self.driver.next_event(t)
        for b in self.eth.values():
            if b.outbox:
                return t
            cand = []
            if b.staged:
                cand.append(b.staged_since + b.flush_deadline)
            if b.st.unacked and b.st.timer_start is not None:
                cand.append(b.st.timer_start + b.st.timeout)
            for c in cand:
                c = max(c, t)
                best = c if best is None else min(best, c)
        return best

    def bridge_counters(self) -> Dict[str, int]:
        c = defaultdict(int)
        for b in self.eth.values():
            c["retransmits"] += b.st.retransmits
            c["timeouts"] += b.st.timeouts
            c["dup_drops"] += b.st.dup_drops
            c["eth_frames_sent"] += b.counters.frames_sent
            c["eth_acks_sent"] += b.counters.acks_sent
        for b in self.p2p.values():
            c["p2p_frames_sent"] += b.counters.frames_sent
        c["corrupt_frames"] += self.corrupt_frames
        c["wrong_destination"] += self.wrong_destination
        c["unknown_channel"] += self.unknown_channel
        return dict(c)
