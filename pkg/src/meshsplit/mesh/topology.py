from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .flit import NUM_PLANES, TileCoord

MAX_DIM = 256


class Port(IntEnum):
    NORTH = 0
    SOUTH = 1
    EAST = 2
    WEST = 3
    LOCAL = 4

    @property
    def opposite(self) -> "Port":
        return _OPPOSITE[self]


_OPPOSITE = {
    Port.NORTH: Port.SOUTH,
    Port.SOUTH: Port.NORTH,
    Port.EAST: Port.WEST,
    Port.WEST: Port.EAST,
    Port.LOCAL: Port.LOCAL,
}

# (dx, dy) per port; y grows southward
PORT_DELTA = {
    Port.NORTH: (0, -1),
    Port.SOUTH: (0, 1),
    Port.EAST: (1, 0),
    Port.WEST: (-1, 0),
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` carries one message per failed check."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class MeshConfig:
    width: int
    height: int
    planes: int = NUM_PLANES
    router_buffer_depth: int = 4
    credits_per_link: int = 4

    def __post_init__(self):
        errors = []
        if not 1 <= self.width <= MAX_DIM:
            errors.append(f"mesh.width must be in 1..{MAX_DIM}, got {self.width}")
        if not 1 <= self.height <= MAX_DIM:
            errors.append(f"mesh.height must be in 1..{MAX_DIM}, got {self.height}")
        if self.planes != NUM_PLANES:
            errors.append(f"mesh.planes must be {NUM_PLANES}, got {self.planes}")
        if self.router_buffer_depth < 1:
            errors.append("mesh.router_buffer_depth must be >= 1")
        if self.credits_per_link < 1:
            errors.append("mesh.credits_per_link must be >= 1")
        elif self.credits_per_link > self.router_buffer_depth:
            errors.append("mesh.credits_per_link must not exceed mesh.router_buffer_depth")
        if errors:
            raise ConfigError(errors)

    @property
    def tiles(self) -> int:
        return self.width * self.height

    def contains(self, c: TileCoord) -> bool:
        return 0 <= c.x < self.width and 0 <= c.y < self.height

    def coords(self):
        """Row-major tile order; the index of a tile in this order is its core index."""
        for y in range(self.height):
            for x in range(self.width):
                yield TileCoord(x, y)

    def neighbor(self, c: TileCoord, port: Port):
        dx, dy = PORT_DELTA[port]
        n = TileCoord(c.x + dx, c.y + dy)
        return n if self.contains(n) else None

    @property
    def chipset_coord(self) -> TileCoord:
        return TileCoord(self.width, 0)


def route_next_hop(current: TileCoord, dest: TileCoord) -> Port:
    """Dimension-ordered XY routing: resolve X fully, then Y."""
    if dest.x > current.x:
        return Port.EAST
    if dest.x < current.x:
        return Port.WEST
    if dest.y > current.y:
        return Port.SOUTH
    if dest.y < current.y:
        return Port.NORTH
    return Port.LOCAL


def xy_path(src: TileCoord, dest: TileCoord):
    """Tiles visited from src to dest, both inclusive."""
    path = [src]
    cur = src
    while cur != dest:
        dx, dy = PORT_DELTA[route_next_hop(cur, dest)]
        cur = TileCoord(cur.x + dx, cur.y + dy)
        path.append(cur)
    return path
