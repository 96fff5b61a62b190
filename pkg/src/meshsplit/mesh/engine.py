"""Array-backed router state for a rectangle of the mesh.

A :class:`MeshEngine` simulates every router inside its rectangle. Router
outputs that face a tile outside the rectangle become *boundary slots*:
flits leaving through them are handed back to the caller, and
flits arriving through them are pushed in by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import _backend
from ._kernel_py import OUT_BOUNDARY, OUT_EJECT, OUT_NONE, OUT_ROUTER
from .flit import NUM_PLANES, TileCoord
from .topology import MeshConfig, Port

NPORTS = 5


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    w: int
    h: int

    def contains(self, c: TileCoord) -> bool:
        return self.x0 <= c.x < self.x0 + self.w and self.y0 <= c.y < self.y0 + self.h

    def coords(self):
        for y in range(self.y0, self.y0 + self.h):
            for x in range(self.x0, self.x0 + self.w):
                yield TileCoord(x, y)

    @property
    def origin(self) -> TileCoord:
        return TileCoord(self.x0, self.y0)

    @property
    def size(self) -> int:
        return self.w * self.h


class RouterArrays:
    """Flat state bundle shared by both kernel implementations."""

    def __init__(self, n_routers: int, depth: int):
        R, P = n_routers, NUM_PLANES
        self.n_routers = R
        self.kernel_ctx = None  # compiled kernel caches typed views here
        self.depth = depth
        self.fifo_data = np.zeros((R, P, NPORTS, depth), dtype=np.uint64)
        self.fifo_kind = np.zeros((R, P, NPORTS, depth), dtype=np.uint8)
        self.fifo_head = np.zeros((R, P, NPORTS), dtype=np.int32)
        self.fifo_cnt = np.zeros((R, P, NPORTS), dtype=np.int32)
        self.in_route = np.full((R, P, NPORTS), -1, dtype=np.int8)
        self.credits = np.zeros((R, P, NPORTS), dtype=np.int32)
        self.lock = np.full((R, P, NPORTS), -1, dtype=np.int8)
        self.rr = np.zeros((R, P, NPORTS), dtype=np.int8)
        self.occ = np.zeros((R, P), dtype=np.int32)
        self.out_type = np.zeros((R, NPORTS), dtype=np.int8)
        self.out_r = np.full((R, NPORTS), -1, dtype=np.int32)
        self.out_i = np.full((R, NPORTS), -1, dtype=np.int8)
        self.out_slot = np.full((R, NPORTS), -1, dtype=np.int32)
        self.up_r = np.full((R, NPORTS), -1, dtype=np.int32)
        self.up_o = np.full((R, NPORTS), -1, dtype=np.int8)
        self.link_flits = np.zeros((R, P, NPORTS), dtype=np.int64)
        n = R * P * NPORTS
        self.mv_r = np.zeros(n, dtype=np.int32)
        self.mv_p = np.zeros(n, dtype=np.int8)
        self.mv_i = np.zeros(n, dtype=np.int8)
        self.mv_o = np.zeros(n, dtype=np.int8)
        self.mv_data = np.zeros(n, dtype=np.uint64)
        self.mv_kind = np.zeros(n, dtype=np.uint8)
        self.ej_r = np.zeros(n, dtype=np.int32)
        self.ej_p = np.zeros(n, dtype=np.int8)
        self.ej_data = np.zeros(n, dtype=np.uint64)
        self.ej_kind = np.zeros(n, dtype=np.uint8)
        self.bd_slot = np.zeros(n, dtype=np.int32)
        self.bd_p = np.zeros(n, dtype=np.int8)
        self.bd_data = np.zeros(n, dtype=np.uint64)
        self.bd_kind = np.zeros(n, dtype=np.uint8)
        self.tr_r = np.zeros(n, dtype=np.int32)
        self.tr_p = np.zeros(n, dtype=np.int8)
        self.tr_o = np.zeros(n, dtype=np.int8)
        self.tr_kind = np.zeros(n, dtype=np.uint8)
        self.tr_data = np.zeros(n, dtype=np.uint64)
        # routing parameters, filled by MeshEngine
        self.w = 1
        self.gx0 = 0
        self.gy0 = 0
        self.chipset_x = 0
        self.gw_x = 0
        self.gw_y = 0


class MeshEngine:
    def __init__(
        self,
        mesh: MeshConfig,
        rect: Optional[Rect] = None,
        gateway: TileCoord = TileCoord(0, 0),
        kernel: Optional[str] = None,
        record_links: bool = False,
    ):
        self.mesh = mesh
        self.rect = rect or Rect(0, 0, mesh.width, mesh.height)
        self.kernel = _backend.get(kernel)
        self.record_links = record_links
        self.coords: List[TileCoord] = list(self.rect.coords())
        self._index = {c: i for i, c in enumerate(self.coords)}
        st = self.st = RouterArrays(len(self.coords), mesh.router_buffer_depth)
        st.w = self.rect.w
        st.gx0 = self.rect.x0
        st.gy0 = self.rect.y0
        st.chipset_x = mesh.width
        st.gw_x = gateway.x
        st.gw_y = gateway.y

        # (tile, port) pairs in canonical order; index == slot id
        self.boundary: List[Tuple[TileCoord, Port]] = []
        router_links = []
        for r, c in enumerate(self.coords):
            st.out_type[r, Port.LOCAL] = OUT_EJECT
            for port in (Port.NORTH, Port.SOUTH, Port.EAST, Port.WEST):
                nb = mesh.neighbor(c, port)
                if nb is None:
                    st.out_type[r, port] = OUT_NONE
                elif self.rect.contains(nb):
                    r2 = self._index[nb]
                    st.out_type[r, port] = OUT_ROUTER
                    st.out_r[r, port] = r2
                    st.out_i[r, port] = port.opposite
                    st.up_r[r2, port.opposite] = r
                    st.up_o[r2, port.opposite] = port
                    st.credits[r, :, port] = mesh.credits_per_link
                    router_links.append((r, int(port), r2, int(port.opposite)))
                else:
                    st.out_type[r, port] = OUT_BOUNDARY
                    st.out_slot[r, port] = len(self.boundary)
                    st.credits[r, :, port] = mesh.credits_per_link
                    self.boundary.append((c, port))
        self._slot_of = {key: i for i, key in enumerate(self.boundary)}
        self._slot_r = np.array([self._index[c] for c, _ in self.boundary], dtype=np.intp)
        self._slot_port = np.array([int(p) for _, p in self.boundary], dtype=np.intp)
        rl = np.array(router_links, dtype=np.intp).reshape(-1, 4)
        self._rl = rl
        self.link_trace: List[np.ndarray] = []
        self.flits_injected = 0
        self.flits_ejected = 0
        self.flits_boundary_in = 0
        self.flits_boundary_out = 0

    # -- topology helpers ------------------------------------------------
    def index(self, c: TileCoord) -> int:
        return self._index[c]

    def slot(self, tile: TileCoord, port: Port) -> int:
        return self._slot_of[(tile, port)]

    # -- external inputs -------------------------------------------------
    def local_has_room(self, r: int, plane: int) -> bool:
        return self.st.fifo_cnt[r, plane, Port.LOCAL] < self.st.depth

    def inject_flit(self, r: int, plane: int, data: int, kind: int) -> bool:
        ok = self.kernel.push(self.st, r, plane, int(Port.LOCAL), data, kind)
        if ok:
            self.flits_injected += 1
        return ok

    def push_boundary(self, slot: int, plane: int, data: int, kind: int) -> bool:
        ok = self.kernel.push(self.st, int(self._slot_r[slot]), plane, int(self._slot_port[slot]), data, kind)
        if ok:
            self.flits_boundary_in += 1
        return ok

    def return_credit(self, slot: int, plane: int) -> None:
        r, port = int(self._slot_r[slot]), int(self._slot_port[slot])
        self.st.credits[r, plane, port] += 1
        assert self.st.credits[r, plane, port] <= self.mesh.credits_per_link

    # -- stepping --------------------------------------------------------
    def step(self, cycle: int):
        """Advance one cycle.

        Returns ``(ejections, departures)``: lists of ``(r, plane, data, kind)``
        and ``(slot, plane, data, kind)``.
        """
        st = self.st
        n_ej, n_bd, n_tr = self.kernel.step(st, cycle, self.record_links)
        ej = bd = ()
        if n_ej:
            ej = list(zip(st.ej_r[:n_ej].tolist(), st.ej_p[:n_ej].tolist(),
                          st.ej_data[:n_ej].tolist(), st.ej_kind[:n_ej].tolist()))
            self.flits_ejected += n_ej
        if n_bd:
            bd = list(zip(st.bd_slot[:n_bd].tolist(), st.bd_p[:n_bd].tolist(),
                          st.bd_data[:n_bd].tolist(), st.bd_kind[:n_bd].tolist()))
            self.flits_boundary_out += n_bd
        if n_tr:
            # one row per link traversal: cycle, router, plane, output port, kind, payload
            rec = np.empty((n_tr, 6), dtype=np.uint64)
            rec[:, 0] = cycle
            rec[:, 1] = st.tr_r[:n_tr]
            rec[:, 2] = st.tr_p[:n_tr]
            rec[:, 3] = st.tr_o[:n_tr]
            rec[:, 4] = st.tr_kind[:n_tr]
            rec[:, 5] = st.tr_data[:n_tr]
            self.link_trace.append(rec)
        return ej, bd

    # -- observation -----------------------------------------------------
    def in_flight(self) -> int:
        return int(self.st.occ.sum())

    def idle(self) -> bool:
        return not self.st.occ.any()

    def credit_violations(self, boundary_queue_len: Optional[np.ndarray] = None) -> int:
        """Count (link, plane) pairs where sender credits + downstream occupancy
        differs from ``credits_per_link``. ``boundary_queue_len`` has shape
        (slots, planes) and holds the occupancy of the queue behind each
        boundary output."""
        st, cpl = self.st, self.mesh.credits_per_link
        bad = 0
        rl = self._rl
        if len(rl):
            lhs = st.credits[rl[:, 0], :, rl[:, 1]] + st.fifo_cnt[rl[:, 2], :, rl[:, 3]]
            bad += int(np.count_nonzero(lhs != cpl))
        if len(self.boundary):
            occ = boundary_queue_len if boundary_queue_len is not None else 0
            lhs = st.credits[self._slot_r, :, self._slot_port] + occ
            bad += int(np.count_nonzero(lhs != cpl))
        bad += int(np.count_nonzero(st.credits < 0))
        return bad

    def link_endpoints(self, r: int, port: int):
        c = self.coords[r]
        if port == Port.LOCAL:
            return c, c
        return c, self.mesh.neighbor(c, Port(port))

    def link_stats(self):
        """Yield (src, dst, plane, port, flits) for every real output with traffic
        counters, including ejection (src == dst)."""
        st = self.st
        for r, c in enumerate(self.coords):
            for port in range(NPORTS):
                if st.out_type[r, port] == OUT_NONE:
                    continue
                src, dst = self.link_endpoints(r, port)
                for p in range(NUM_PLANES):
                    yield src, dst, p, port, int(st.link_flits[r, p, port])

    def link_trace_array(self) -> np.ndarray:
        if not self.link_trace:
            return np.zeros((0, 6), dtype=np.uint64)
        return np.concatenate(self.link_trace)
