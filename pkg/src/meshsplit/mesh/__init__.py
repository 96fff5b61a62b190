"""Tiled 2D-mesh network: flits, XY routing and wormhole routers on three planes."""
from ._backend import KERNEL_NAME
from .engine import MeshEngine, Rect
from .flit import (
    MAX_BODY_LEN,
    NUM_PLANES,
    BodyTooLong,
    Flit,
    FlitKind,
    MalformedPacket,
    Packet,
    TileCoord,
    decode_packet,
    encode_packet,
)
from .topology import ConfigError, MeshConfig, Port, route_next_hop, xy_path
from .validate import check_link_trace, check_stream

__all__ = [
    "KERNEL_NAME", "MeshEngine", "Rect", "MAX_BODY_LEN", "NUM_PLANES", "BodyTooLong",
    "Flit", "FlitKind", "MalformedPacket", "Packet", "TileCoord", "decode_packet",
    "encode_packet", "ConfigError", "MeshConfig", "Port", "route_next_hop", "xy_path",
    "check_link_trace", "check_stream",
]
