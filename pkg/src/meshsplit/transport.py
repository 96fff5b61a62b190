"""Per-node stream transport: channel mux, CDC FIFO and demux."""
from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, Iterable, List, Optional, Tuple

from .mesh.flit import Flit, FlitKind

DEFAULT_CDC_DEPTH = 32


@dataclass(frozen=True)
class StreamWord:
    data: int
    channel: int
    kind: FlitKind
    last: bool = False

    @classmethod
    def from_flit(cls, channel: int, data: int, kind) -> "StreamWord":
        kind = FlitKind(kind)
        return cls(data, channel, kind, kind.is_tail)

    @property
    def flit(self) -> Flit:
        return Flit(self.data, self.kind)


class UnknownChannel(KeyError):
    pass


class Mux:
    """Packet-granular round-robin over per-channel flit queues.

    Once a channel's head word is taken the mux stays on that channel until its
    tail, stalling if the tail has not arrived yet. Ties go to the lowest
    channel id after the last served one.
    """

    def __init__(self, channel_ids: Iterable[int]):
        self.queues: Dict[int, Deque[Tuple[int, int]]] = {c: deque() for c in sorted(channel_ids)}
        self._order: List[int] = sorted(self.queues)
        self._pos = {c: i for i, c in enumerate(self._order)}
        self._ready: List[int] = []  # sorted positions of non-empty queues
        self._current: Optional[int] = None
        self._next = 0  # position in _order where the next search starts
        self._pending = 0
        self.words_out = 0

    def enqueue(self, channel: int, data: int, kind: int) -> None:
        q = self.queues[channel]
        if not q:
            bisect.insort(self._ready, self._pos[channel])
        q.append((data, kind))
        self._pending += 1

    def pending(self) -> int:
        return self._pending

    def _select(self) -> Optional[int]:
        if self._current is not None:
            return self._current if self.queues[self._current] else None
        if not self._ready:
            return None
        i = bisect.bisect_left(self._ready, self._next)
        return self._order[self._ready[i if i < len(self._ready) else 0]]

    def peek(self) -> Optional[StreamWord]:
        c = self._select()
        if c is None:
            return None
        data, kind = self.queues[c][0]
        return StreamWord.from_flit(c, data, kind)

    def pop(self) -> Optional[StreamWord]:
        c = self._select()
        if c is None:
            return None
        q = self.queues[c]
        data, kind = q.popleft()
        self._pending -= 1
        pos = self._pos[c]
        if not q:
            del self._ready[bisect.bisect_left(self._ready, pos)]
        w = StreamWord.from_flit(c, data, kind)
        if kind & 2:
            self._current = None
            self._next = (pos + 1) % len(self._order)
        else:
            self._current = c
        self.words_out += 1
        return w


def mux(m: Mux) -> Optional[StreamWord]:
    """Next word on the wire, or ``None`` when idle or stalled."""
    return m.pop()


class Demux:
    """Steer words to per-channel egress queues; unknown channels are counted and dropped."""

    def __init__(self, channel_ids: Iterable[int]):
        self.queues: Dict[int, Deque[Flit]] = {c: deque() for c in sorted(channel_ids)}
        self.unknown_channel = 0

    def demux(self, word: StreamWord) -> Tuple[int, Flit]:
        q = self.queues.get(word.channel)
        if q is None:
            self.unknown_channel += 1
            raise UnknownChannel(word.channel)
        f = word.flit
        q.append(f)
        return word.channel, f

    def deliver(self, word: StreamWord) -> bool:
        """Like :meth:`demux` but reports an unknown channel as ``False``."""
        try:
            self.demux(word)
        except UnknownChannel:
            return False
        return True

    def pending(self) -> int:
        return sum(len(q) for q in self.queues.values())


class CdcFifo:
    """Bounded FIFO between two clock domains with integer cycle periods."""

    ACCEPTED = True
    BACKPRESSURED = False

    def __init__(self, depth: int = DEFAULT_CDC_DEPTH, push_period: int = 1, pop_period: int = 1):
        if depth < 1 or push_period < 1 or pop_period < 1:
            raise ValueError("CDC depth and periods must be >= 1")
        self.depth = depth
        self.push_period = push_period
        self.pop_period = pop_period
        self._q: Deque[StreamWord] = deque()
        self.pushed = 0
        self.popped = 0

    @property
    def occupancy(self) -> int:
        return len(self._q)

    def full(self) -> bool:
        return len(self._q) >= self.depth

    def push_tick(self, cycle: int) -> bool:
        return cycle % self.push_period == 0

    def pop_tick(self, cycle: int) -> bool:
        return cycle % self.pop_period == 0

    def push(self, w: StreamWord) -> bool:
        if len(self._q) >= self.depth:
            return self.BACKPRESSURED
        self._q.append(w)
        self.pushed += 1
        return self.ACCEPTED

    def pop(self) -> Optional[StreamWord]:
        if not self._q:
            return None
        self.popped += 1
        return self._q.popleft()

    def peek(self) -> Optional[StreamWord]:
        return self._q[0] if self._q else None


def cdc_push(f: CdcFifo, w: StreamWord) -> bool:
    return f.push(w)


def cdc_pop(f: CdcFifo) -> Optional[StreamWord]:
    return f.pop()
