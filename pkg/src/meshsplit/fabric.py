"""Inter-node media: paced links with optional Bernoulli loss and a learning switch."""
from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple

from .mesh.topology import ConfigError


@dataclass(frozen=True)
class FabricConfig:
    p2p_latency: int = 4
    p2p_bandwidth: int = 32
    switch_link_latency: int = 8
    switch_forwarding_latency: int = 4
    switch_bandwidth: int = 32
    loss_prob: float = 0.0
    switch_queue_bytes: int = 64 * 1024
    seed: int = 1

    def __post_init__(self):
        errors = []
        for name in ("p2p_latency", "switch_link_latency"):
            if getattr(self, name) < 1:
                errors.append(f"fabric.{name} must be >= 1")
        if self.switch_forwarding_latency < 0:
            errors.append("fabric.switch_forwarding_latency must be >= 0")
        for name in ("p2p_bandwidth", "switch_bandwidth", "switch_queue_bytes"):
            if getattr(self, name) <= 0:
                errors.append(f"fabric.{name} must be > 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            errors.append("fabric.loss_prob must be within [0, 1]")
        if errors:
            raise ConfigError(errors)

    @property
    def switched_latency(self) -> int:
        """Unloaded end-to-end latency through the switch."""
        return 2 * self.switch_link_latency + self.switch_forwarding_latency


@dataclass(frozen=True)
class DeliveryEvent:
    frame: bytes
    arrival: int
    port: int = 0


class LinkModel:
    """One direction of a serial link.

    A frame occupies the link for ``ceil(len / bandwidth)`` cycles starting when
    the link is free, and arrives ``latency`` cycles after its last byte left.
    """

    def __init__(self, latency_cycles: int, bandwidth_bytes_per_cycle: int, loss_prob: float = 0.0,
                 seed=0, port: int = 0):
        if latency_cycles < 1:
            raise ValueError("latency must be >= 1 cycle")
        if bandwidth_bytes_per_cycle <= 0:
            raise ValueError("bandwidth must be positive")
        if not 0.0 <= loss_prob <= 1.0:
            raise ValueError("loss probability must be within [0, 1]")
        self.latency = latency_cycles
        self.bandwidth = bandwidth_bytes_per_cycle
        self.loss_prob = loss_prob
        self.port = port
        self._rng = random.Random(seed)
        self.busy_until = 0
        self._backlog: Deque[Tuple[int, int]] = deque()
        self.frames_sent = 0
        self.bytes_sent = 0
        self.dropped = 0

    def backlog_bytes(self, now: int) -> int:
        while self._backlog and self._backlog[0][0] <= now:
            self._backlog.popleft()
        return sum(n for _, n in self._backlog)

    def send(self, frame: bytes, now: int) -> Optional[DeliveryEvent]:
        """Put a frame on the link; ``None`` means it was lost."""
        ser = -(-len(frame) // self.bandwidth) or 1
        start = max(now, self.busy_until)
        self.busy_until = start + ser
        self._backlog.append((self.busy_until, len(frame)))
        self.frames_sent += 1
        self.bytes_sent += len(frame)
        if self.loss_prob > 0.0 and self._rng.random() < self.loss_prob:
            self.dropped += 1
            return None
        return DeliveryEvent(frame, start + ser - 1 + self.latency, self.port)


def link_send(link: LinkModel, frame: bytes, now: int) -> Optional[DeliveryEvent]:
    return link.send(frame, now)


class SwitchModel:
    """Store-and-forward learning switch with byte-bounded egress queues."""

    def __init__(self, downlinks: List[LinkModel], forwarding_latency: int = 4,
                 queue_bytes: int = 64 * 1024):
        self.downlinks = downlinks
        self.forwarding_latency = forwarding_latency
        self.queue_bytes = queue_bytes
        self.mac_table: Dict[bytes, int] = {}
        self.forwarded = 0
        self.flooded = 0
        self.runts = 0
        self.overflow_drops = 0

    def forward(self, frame: bytes, ingress: int, now: int) -> List[DeliveryEvent]:
        if len(frame) < 12:
            self.runts += 1
            return []
        dst, src = bytes(frame[:6]), bytes(frame[6:12])
        self.mac_table[src] = ingress
        port = self.mac_table.get(dst)
        if port is None:
            ports = [p for p in range(len(self.downlinks)) if p != ingress]
            self.flooded += 1
        else:
            ports = [port]
            self.forwarded += 1
        t = now + self.forwarding_latency
        out = []
        for p in ports:
            link = self.downlinks[p]
            if link.backlog_bytes(t) + len(frame) > self.queue_bytes:
                self.overflow_drops += 1
                continue
            ev = link.send(frame, t)
            if ev is not None:
                out.append(ev)
        return out


def switch_forward(s: SwitchModel, frame: bytes, ingress: int, now: int) -> List[DeliveryEvent]:
    return s.forward(frame, ingress, now)


def link_seed(seed, kind: str, a: int, b: int = -1) -> str:
    return f"{seed}:{kind}:{a}:{b}"


class SwitchedSegment:
    """Uplinks, switch and downlinks of the switched path.

    Shared verbatim by the in-process fabric and the standalone switch
    process so both make identical drop and scheduling decisions.
    """

    def __init__(self, n_nodes: int, cfg: FabricConfig):
        self.cfg = cfg
        self.uplinks = [LinkModel(cfg.switch_link_latency, cfg.switch_bandwidth, cfg.loss_prob,
                                  link_seed(cfg.seed, "up", n), port=n) for n in range(n_nodes)]
        downlinks = [LinkModel(cfg.switch_link_latency, cfg.switch_bandwidth, 0.0,
                               link_seed(cfg.seed, "down", n), port=n) for n in range(n_nodes)]
        self.switch = SwitchModel(downlinks, cfg.switch_forwarding_latency, cfg.switch_queue_bytes)
        self._ingress: List[Tuple[int, int, int, bytes]] = []
        self._seq = 0

    def send(self, src: int, frame: bytes, now: int) -> None:
        ev = self.uplinks[src].send(frame, now)
        if ev is not None:
            heapq.heappush(self._ingress, (ev.arrival, src, self._seq, frame))
            self._seq += 1

    def process(self, now: int) -> List[DeliveryEvent]:
        """Run the switch for every frame reaching it at or before ``now``."""
        out = []
        while self._ingress and self._ingress[0][0] <= now:
            arrival, src, _, frame = heapq.heappop(self._ingress)
            out.extend(self.switch.forward(frame, src, arrival))
        return out

    def pending(self) -> int:
        return len(self._ingress)

    @property
    def bytes_sent(self) -> int:
        return sum(l.bytes_sent for l in self.uplinks)

    @property
    def dropped(self) -> int:
        return sum(l.dropped for l in self.uplinks)

    def counters(self) -> dict:
        sw = self.switch
        return {
            "uplink_frames": sum(l.frames_sent for l in self.uplinks),
            "uplink_bytes": self.bytes_sent,
            "loss_drops": self.dropped,
            "forwarded": sw.forwarded,
            "flooded": sw.flooded,
            "runts": sw.runts,
            "overflow_drops": sw.overflow_drops,
        }


# link key ordering for same-cycle arrivals: switch downlink first, then P2P by peer
SWITCH_LINK_KEY = 0


def p2p_link_key(peer: int) -> int:
    return 1 + peer


@dataclass(order=True)
class Arrival:
    arrival: int
    link_key: int
    seq: int
    frame: bytes = field(compare=False)
    peer: int = field(compare=False, default=-1)  # -1: via switch

    @property
    def via_switch(self) -> bool:
        return self.link_key == SWITCH_LINK_KEY


class Fabric:
    """All media of a simulated run, owned by the single scheduler."""

    def __init__(self, n_nodes: int, p2p_pairs, cfg: FabricConfig):
        self.cfg = cfg
        self.n_nodes = n_nodes
        self.segment = SwitchedSegment(n_nodes, cfg)
        self.p2p: Dict[Tuple[int, int], LinkModel] = {}
        for a, b in p2p_pairs:
            for s, d in ((a, b), (b, a)):
                self.p2p[(s, d)] = LinkModel(cfg.p2p_latency, cfg.p2p_bandwidth, 0.0,
                                             link_seed(cfg.seed, "p2p", s, d), port=d)
        self._inbox: List[List[Arrival]] = [[] for _ in range(n_nodes)]
        self._seq = 0

    def _deliver(self, node: int, a: Arrival) -> None:
        heapq.heappush(self._inbox[node], a)

    def send_p2p(self, src: int, dst: int, frame: bytes, now: int) -> None:
        ev = self.p2p[(src, dst)].send(frame, now)
        assert ev is not None, "point-to-point links are lossless"
        self._seq += 1
        self._deliver(dst, Arrival(ev.arrival, p2p_link_key(src), self._seq, frame, src))

    def send_switched(self, src: int, frame: bytes, now: int) -> None:
        self.segment.send(src, frame, now)

    def process(self, now: int) -> None:
        for ev in self.segment.process(now):
            self._seq += 1
            self._deliver(ev.port, Arrival(ev.arrival, SWITCH_LINK_KEY, self._seq, ev.frame))

    def arrivals(self, node: int, now: int) -> List[Arrival]:
        box = self._inbox[node]
        out = []
        while box and box[0].arrival <= now:
            out.append(heapq.heappop(box))
        return out

    def idle(self) -> bool:
        return self.segment.pending() == 0 and not any(self._inbox)

    def next_event(self) -> Optional[int]:
        heads = [box[0].arrival for box in self._inbox if box]
        if self.segment._ingress:
            heads.append(self.segment._ingress[0][0])
        return min(heads) if heads else None

    @property
    def p2p_bytes(self) -> int:
        return sum(l.bytes_sent for l in self.p2p.values())

    @property
    def switched_bytes(self) -> int:
        return self.segment.bytes_sent
