"""Tile-to-node assignment, cut-link enumeration and channel mapping."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .mesh.engine import Rect
from .mesh.flit import NUM_PLANES, TileCoord
from .mesh.topology import ConfigError, MeshConfig, Port

MANIFEST_SCHEMA = 1


class IndivisibleMesh(ConfigError):
    pass


class Strategy(str, Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"
    GRID = "grid"


class Path(str, Enum):
    P2P = "p2p"
    SWITCHED = "switched"


@dataclass(frozen=True)
class PartitionSpec:
    strategy: Strategy = Strategy.VERTICAL
    node_count: int = 1
    chipset_node: int = 0
    p2p_pairs: Tuple[Tuple[int, int], ...] = ()
    grid_cols: Optional[int] = None
    grid_rows: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        pairs = tuple(tuple(sorted((int(a), int(b)))) for a, b in self.p2p_pairs)
        object.__setattr__(self, "p2p_pairs", pairs)
        errors = []
        if self.node_count < 1:
            errors.append("partition.node_count must be >= 1")
        if not 0 <= self.chipset_node < max(self.node_count, 1):
            errors.append(f"partition.chipset_node {self.chipset_node} out of range")
        seen = set()
        for a, b in pairs:
            if a == b:
                errors.append(f"p2p pair ({a}, {b}) pairs a node with itself")
            for n in (a, b):
                if not 0 <= n < self.node_count:
                    errors.append(f"p2p pair node {n} out of range")
                if n in seen:
                    errors.append(f"node {n} appears in more than one p2p pair")
                seen.add(n)
        if self.strategy is Strategy.GRID:
            if not self.grid_cols or not self.grid_rows:
                errors.append("grid strategy requires partition.grid.cols and partition.grid.rows")
            elif self.grid_cols * self.grid_rows != self.node_count:
                errors.append("grid cols x rows must equal partition.node_count")
        if errors:
            raise ConfigError(errors)

    def is_paired(self, a: int, b: int) -> bool:
        return tuple(sorted((a, b))) in self.p2p_pairs


@dataclass(frozen=True)
class PartitionMap:
    mesh: MeshConfig
    rects: Tuple[Rect, ...]

    def __post_init__(self):
        lookup = {}
        for n, rect in enumerate(self.rects):
            for c in rect.coords():
                lookup[c] = n
        object.__setattr__(self, "_lookup", lookup)

    @property
    def node_count(self) -> int:
        return len(self.rects)

    def tile_to_node(self, c: TileCoord) -> int:
        return self._lookup[c]

    def node_tiles(self, n: int) -> List[TileCoord]:
        return list(self.rects[n].coords())


@dataclass(frozen=True, order=True)
class CutLink:
    src: TileCoord
    dst: TileCoord
    plane: int

    @property
    def port(self) -> Port:
        dx, dy = self.dst.x - self.src.x, self.dst.y - self.src.y
        return {(1, 0): Port.EAST, (-1, 0): Port.WEST, (0, 1): Port.SOUTH, (0, -1): Port.NORTH}[(dx, dy)]


@dataclass(frozen=True)
class Channel:
    cut: CutLink
    src_node: int
    dst_node: int
    channel_id: int
    path: Path


@dataclass
class ChannelMap:
    channels: List[Channel] = field(default_factory=list)

    def __post_init__(self):
        self._by_cut = {ch.cut: ch for ch in self.channels}
        self._by_key = {(ch.src_node, ch.dst_node, ch.channel_id): ch for ch in self.channels}

    def __len__(self):
        return len(self.channels)

    def __iter__(self):
        return iter(self.channels)

    def for_cut(self, cut: CutLink) -> Channel:
        return self._by_cut[cut]

    def lookup(self, src_node: int, dst_node: int, channel_id: int) -> Optional[Channel]:
        return self._by_key.get((src_node, dst_node, channel_id))

    def node_pairs(self) -> Dict[Tuple[int, int], Path]:
        out = {}
        for ch in self.channels:
            out[(ch.src_node, ch.dst_node)] = ch.path
        return dict(sorted(out.items()))

    def outgoing(self, node: int) -> List[Channel]:
        return [ch for ch in self.channels if ch.src_node == node]

    def incoming(self, node: int) -> List[Channel]:
        return [ch for ch in self.channels if ch.dst_node == node]


def partition(mesh: MeshConfig, spec: PartitionSpec) -> PartitionMap:
    n = spec.node_count
    if spec.strategy is Strategy.VERTICAL:
        cols, rows = n, 1
    elif spec.strategy is Strategy.HORIZONTAL:
        cols, rows = 1, n
    else:
        cols, rows = spec.grid_cols, spec.grid_rows
    errors = []
    if mesh.width % cols:
        errors.append(f"IndivisibleMesh: width {mesh.width} is not divisible into {cols} node columns")
    if mesh.height % rows:
        errors.append(f"IndivisibleMesh: height {mesh.height} is not divisible into {rows} node rows")
    if errors:
        raise IndivisibleMesh(errors)
    w, h = mesh.width // cols, mesh.height // rows
    rects = tuple(Rect(cx * w, cy * h, w, h) for cy in range(rows) for cx in range(cols))
    return PartitionMap(mesh, rects)


def cut_links(mesh: MeshConfig, pmap: PartitionMap) -> List[CutLink]:
    out = []
    for c in mesh.coords():
        a = pmap.tile_to_node(c)
        for port in (Port.NORTH, Port.SOUTH, Port.EAST, Port.WEST):
            nb = mesh.neighbor(c, port)
            if nb is not None and pmap.tile_to_node(nb) != a:
                out.extend(CutLink(c, nb, p) for p in range(NUM_PLANES))
    out.sort()
    return out


def assign_channels(cuts: Sequence[CutLink], spec: PartitionSpec, pmap: PartitionMap) -> ChannelMap:
    next_id: Dict[Tuple[int, int], int] = defaultdict(int)
    channels = []
    for cut in sorted(cuts):
        a, b = pmap.tile_to_node(cut.src), pmap.tile_to_node(cut.dst)
        cid = next_id[(a, b)]
        if cid > 0xFFFF:
            raise ConfigError(f"more than 65536 channels between nodes {a} and {b}")
        next_id[(a, b)] += 1
        path = Path.P2P if spec.is_paired(a, b) else Path.SWITCHED
        channels.append(Channel(cut, a, b, cid, path))
    return ChannelMap(channels)


@dataclass
class Plan:
    """Everything the runtime needs to know about one partitioning."""

    mesh: MeshConfig
    spec: PartitionSpec
    pmap: PartitionMap
    cuts: List[CutLink]
    channels: ChannelMap

    @property
    def gateway(self) -> TileCoord:
        """Tile whose chip-bridge port reaches the chipset."""
        return self.pmap.rects[self.spec.chipset_node].origin


def plan(mesh: MeshConfig, spec: PartitionSpec) -> Plan:
    pmap = partition(mesh, spec)
    cuts = cut_links(mesh, pmap)
    return Plan(mesh, spec, pmap, cuts, assign_channels(cuts, spec, pmap))


def manifest_dict(p: Plan, endpoints: Optional[dict] = None, config_digest: str = "") -> dict:
    nodes = []
    for n, rect in enumerate(p.pmap.rects):
        nodes.append({
            "node": n,
            "rect": {"x0": rect.x0, "y0": rect.y0, "width": rect.w, "height": rect.h},
            "tiles": rect.size,
            "is_chipset": n == p.spec.chipset_node,
        })
    return {
        "schema_version": MANIFEST_SCHEMA,
        "kind": "meshsplit.manifest",
        "config_sha256": config_digest,
        "mesh": {"width": p.mesh.width, "height": p.mesh.height},
        "strategy": p.spec.strategy.value,
        "chipset_node": p.spec.chipset_node,
        "gateway": [p.gateway.x, p.gateway.y],
        "p2p_pairs": [list(x) for x in p.spec.p2p_pairs],
        "nodes": nodes,
        "node_pairs": [
            {"src": a, "dst": b, "path": path.value,
             "channels": sum(1 for ch in p.channels if ch.src_node == a and ch.dst_node == b)}
            for (a, b), path in p.channels.node_pairs().items()
        ],
        "channels": [
            {"src": [ch.cut.src.x, ch.cut.src.y], "dst": [ch.cut.dst.x, ch.cut.dst.y],
             "plane": ch.cut.plane, "src_node": ch.src_node, "dst_node": ch.dst_node,
             "channel_id": ch.channel_id, "path": ch.path.value}
            for ch in p.channels
        ],
        "endpoints": endpoints or {},
    }


def summary_lines(p: Plan) -> List[str]:
    lines = [f"mesh {p.mesh.width}x{p.mesh.height}, {p.spec.strategy.value} split into "
             f"{p.pmap.node_count} node(s), chipset on node {p.spec.chipset_node}"]
    for n, rect in enumerate(p.pmap.rects):
        lines.append(f"  node {n}: tiles x={rect.x0}..{rect.x0 + rect.w - 1} "
                     f"y={rect.y0}..{rect.y0 + rect.h - 1} ({rect.size} tiles)")
    counts: Dict[Tuple[int, int], int] = defaultdict(int)
    for ch in p.channels:
        a, b = sorted((ch.src_node, ch.dst_node))
        counts[(a, b)] += 1
    lines.append(f"  cut links: {len(p.cuts)}")
    for (a, b), k in sorted(counts.items()):
        path = Path.P2P if p.spec.is_paired(a, b) else Path.SWITCHED
        lines.append(f"  boundary {a}-{b}: {k} cut links, {path.value}")
    return lines
