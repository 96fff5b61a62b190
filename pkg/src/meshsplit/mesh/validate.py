"""Replay recorded link traces and check the wormhole discipline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

from .flit import FlitKind, MAX_BODY_LEN


@dataclass
class StreamViolation:
    link: Tuple[int, ...]
    index: int
    reason: str


def check_stream(flits: Iterable[Tuple[int, int]], link=()) -> List[StreamViolation]:
    """Check that ``(kind, payload)`` pairs form a concatenation of whole packets.

    A head's declared body length must be matched by exactly that many
    body flits with the last one marked as tail; anything else means two
    packets were interleaved on the link or a packet was truncated.
    """
    out = []
    remaining = None  # body flits still owed by the open packet
    for n, (kind, payload) in enumerate(flits):
        kind = FlitKind(kind)
        if remaining is None:
            if not kind.is_head:
                out.append(StreamViolation(link, n, f"{kind.name} outside a packet"))
                continue
            body_len = (payload >> 16) & MAX_BODY_LEN
            if kind == FlitKind.HEADTAIL:
                if body_len:
                    out.append(StreamViolation(link, n, "HEADTAIL with nonzero body length"))
            else:
                if body_len == 0:
                    out.append(StreamViolation(link, n, "HEAD with zero body length"))
                else:
                    remaining = body_len
        else:
            if kind.is_head:
                out.append(StreamViolation(link, n, "head inside an open packet (interleaving)"))
                remaining = None
                continue
            remaining -= 1
            if remaining == 0:
                if kind != FlitKind.TAIL:
                    out.append(StreamViolation(link, n, "packet body overruns declared length"))
                remaining = None
            elif kind == FlitKind.TAIL:
                out.append(StreamViolation(link, n, "tail before declared length"))
                remaining = None
    return out


def check_link_trace(rec: np.ndarray, allow_open: bool = False) -> List[StreamViolation]:
    """Validate an engine link trace (rows: cycle, router, plane, port, kind, payload).

    ``allow_open`` tolerates a trailing partial packet per link, for traces cut
    off mid-run.
    """
    if len(rec) == 0:
        return []
    order = np.lexsort((rec[:, 0], rec[:, 3], rec[:, 2], rec[:, 1]))
    rec = rec[order]
    keys = rec[:, 1:4]
    change = np.ones(len(rec), dtype=bool)
    change[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    starts = np.flatnonzero(change).tolist() + [len(rec)]
    out = []
    for a, b in zip(starts[:-1], starts[1:]):
        link = tuple(int(v) for v in rec[a, 1:4])
        seg = list(zip(rec[a:b, 4].tolist(), rec[a:b, 5].tolist()))
        out.extend(check_stream(seg, link))
        if not allow_open and seg and _open_at_end(seg):
            out.append(StreamViolation(link, len(seg), "stream ends inside a packet"))
    return out


def _open_at_end(seg) -> bool:
    remaining = 0
    for kind, payload in seg:
        if kind & 1:
            remaining = 0 if kind == FlitKind.HEADTAIL else (payload >> 16) & MAX_BODY_LEN
        else:
            remaining -= 1
    return remaining > 0
