import os
from collections import deque

import pytest

from meshsplit.mesh import MeshEngine, encode_packet
from meshsplit.mesh import _backend

KERNELS = ["python"] + (["cython"] if _backend.compiled is not None else [])


@pytest.fixture(params=KERNELS)
def kernel(request):
    return request.param


def drive(engine: MeshEngine, schedule, max_cycles=10_000):
    """Inject packets (dict cycle -> [Packet]) through per-(tile, plane) NI
    queues and run until the mesh drains.

    Returns a list of (cycle, tile, plane, data, kind) ejections.
    """
    ni = {}
    out = []
    for t in range(max_cycles):
        for pkt in schedule.get(t, ()):
            q = ni.setdefault((engine.index(pkt.src), pkt.plane), deque())
            q.extend((f.payload, int(f.kind)) for f in encode_packet(pkt))
        for (r, p), q in sorted(ni.items()):
            if q and engine.local_has_room(r, p):
                engine.inject_flit(r, p, *q.popleft())
        ej, _ = engine.step(t)
        for r, p, data, kind in ej:
            out.append((t, engine.coords[r], p, data, kind))
        if t >= max(schedule, default=0) and not any(ni.values()) and engine.idle():
            return out
    raise AssertionError("mesh did not drain")


def reassemble(ejections):
    """Group ejected flits into packets per (tile, plane) in arrival order."""
    from meshsplit.mesh import Flit, FlitKind, decode_packet

    bufs, pkts = {}, []
    for t, tile, p, data, kind in ejections:
        buf = bufs.setdefault((tile, p), [])
        buf.append(Flit(data, FlitKind(kind)))
        if kind & 2:
            pkts.append((t, decode_packet(buf)))
            bufs[(tile, p)] = []
    assert not any(bufs.values()), "partial packet left at an ejection port"
    return pkts
