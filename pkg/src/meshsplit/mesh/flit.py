"""Flit and packet encoding for the 64-bit mesh links.

Head flit layout, MSB first::

    dest_x:8 | dest_y:8 | src_x:8 | src_y:8 | plane:2 | body_len:14 | reserved:16

The flit kind travels out of band (two bits: bit 0 marks a head, bit 1 a tail).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Sequence, Tuple

MASK64 = (1 << 64) - 1
MAX_BODY_LEN = (1 << 14) - 1
NUM_PLANES = 3


class FlitKind(IntEnum):
    BODY = 0
    HEAD = 1
    TAIL = 2
    HEADTAIL = 3

    @property
    def is_head(self) -> bool:
        return bool(self & 1)

    @property
    def is_tail(self) -> bool:
        return bool(self & 2)


class BodyTooLong(ValueError):
    pass


class MalformedPacket(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TileCoord:
    x: int
    y: int

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Flit:
    payload: int
    kind: FlitKind


@dataclass(frozen=True)
class Packet:
    src: TileCoord
    dest: TileCoord
    plane: int
    body: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        # accept lists for convenience but keep the packet hashable
        if not isinstance(self.body, tuple):
            object.__setattr__(self, "body", tuple(self.body))


def _check_byte(name: str, v: int) -> None:
    if not 0 <= v <= 0xFF:
        raise ValueError(f"{name}={v} does not fit the 8-bit header field")


def make_head(dest: TileCoord, src: TileCoord, plane: int, body_len: int) -> int:
    for name, v in (("dest_x", dest.x), ("dest_y", dest.y), ("src_x", src.x), ("src_y", src.y)):
        _check_byte(name, v)
    if not 0 <= plane < NUM_PLANES:
        raise ValueError(f"plane {plane} out of range")
    if body_len > MAX_BODY_LEN:
        raise BodyTooLong(f"body length {body_len} exceeds {MAX_BODY_LEN}")
    return (
        (dest.x << 56)
        | (dest.y << 48)
        | (src.x << 40)
        | (src.y << 32)
        | (plane << 30)
        | (body_len << 16)
    )


def parse_head(word: int) -> Tuple[TileCoord, TileCoord, int, int, int]:
    """Split a head word into (dest, src, plane, body_len, reserved)."""
    return (
        TileCoord((word >> 56) & 0xFF, (word >> 48) & 0xFF),
        TileCoord((word >> 40) & 0xFF, (word >> 32) & 0xFF),
        (word >> 30) & 0x3,
        (word >> 16) & MAX_BODY_LEN,
        word & 0xFFFF,
    )


def encode_packet(p: Packet) -> List[Flit]:
    n = len(p.body)
    if n > MAX_BODY_LEN:
        raise BodyTooLong(f"body length {n} exceeds {MAX_BODY_LEN}")
    head = make_head(p.dest, p.src, p.plane, n)
    if n == 0:
        return [Flit(head, FlitKind.HEADTAIL)]
    flits = [Flit(head, FlitKind.HEAD)]
    for i, w in enumerate(p.body):
        if not 0 <= w <= MASK64:
            raise ValueError(f"body word {i} is not a 64-bit value")
        flits.append(Flit(w, FlitKind.TAIL if i == n - 1 else FlitKind.BODY))
    return flits


def decode_packet(flits: Sequence[Flit]) -> Packet:
    if not flits:
        raise MalformedPacket("empty flit sequence")
    first = flits[0]
    if not FlitKind(first.kind).is_head:
        raise MalformedPacket(f"first flit is {FlitKind(first.kind).name}, expected a head")
    dest, src, plane, body_len, reserved = parse_head(first.payload)
    if reserved:
        raise MalformedPacket(f"reserved header bits set: {reserved:#06x}")
    if plane >= NUM_PLANES:
        raise MalformedPacket(f"plane field {plane} out of range")
    if len(flits) != body_len + 1:
        raise MalformedPacket(f"header declares {body_len} body flits, got {len(flits) - 1}")
    if body_len == 0:
        if first.kind != FlitKind.HEADTAIL:
            raise MalformedPacket("single-flit packet must be HEADTAIL")
        return Packet(src, dest, plane, ())
    if first.kind != FlitKind.HEAD:
        raise MalformedPacket("multi-flit packet must start with HEAD")
    for f in flits[1:-1]:
        if f.kind != FlitKind.BODY:
            raise MalformedPacket(f"unexpected {FlitKind(f.kind).name} inside packet body")
    if flits[-1].kind != FlitKind.TAIL:
        raise MalformedPacket("packet does not end with TAIL")
    return Packet(src, dest, plane, tuple(f.payload for f in flits[1:]))
