"""Wire framing for the two inter-node paths.

Switched path frame (big-endian)::

    dst_mac:6 src_mac:6 ethertype:2 frame_type:1 seq:4 ack:4 word_count:2
    word_count x (channel:2 payload:8 sideband:1)
    crc32:4                      # CRC-32/ISO-HDLC over everything before it

Point-to-point frame::

    word_count:2 credit_return:2 word_count x (channel:2 payload:8 sideband:1)

Sideband byte: bits 1..0 flit kind, bit 2 end-of-burst, bits 7..3 zero.
"""
from __future__ import annotations

import struct
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence, Tuple, Union

from .mesh.flit import FlitKind
from .transport import StreamWord

ETHERTYPE = 0x88B5
FRAME_DATA = 0
FRAME_ACK = 1
MAX_FRAME_WORDS = 134
WORD_RECORD = 11
_ETH_HDR = struct.Struct(">6s6sHBIIH")
ETH_HEADER_LEN = _ETH_HDR.size  # 25
ETH_MIN_LEN = ETH_HEADER_LEN + 4
_P2P_HDR = struct.Struct(">HH")
P2P_HEADER_LEN = _P2P_HDR.size
_REC = struct.Struct(">HQB")
MAC_PREFIX = bytes([0x02, 0x45, 0x4D, 0x49, 0x58])

DEFAULT_WINDOW = 32
DEFAULT_TIMEOUT = 1024
DEFAULT_MAX_RETRIES = 16
DEFAULT_FLUSH_DEADLINE = 8


class CorruptFrame(ValueError):
    pass


class WrongDestination(ValueError):
    pass


class WindowFull(RuntimeError):
    pass


class GiveUp(RuntimeError):
    """Retransmission retries exhausted; the link is considered failed."""


class MalformedP2pFrame(ValueError):
    pass


def node_mac(node: int) -> bytes:
    if not 0 <= node <= 0xFF:
        raise ValueError(f"node index {node} does not fit the MAC suffix")
    return MAC_PREFIX + bytes([node])


def mac_node(mac: bytes) -> Optional[int]:
    if len(mac) == 6 and mac[:5] == MAC_PREFIX:
        return mac[5]
    return None


def format_mac(mac: bytes) -> str:
    return ":".join(f"{b:02X}" for b in mac)


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


# -- word records -------------------------------------------------------------

def _pack_words(words: Sequence[StreamWord]) -> bytes:
    return b"".join(_REC.pack(w.channel, w.data, int(w.kind) | (0x4 if w.last else 0)) for w in words)


def _unpack_words(buf: bytes, offset: int, count: int, exc) -> List[StreamWord]:
    out = []
    for k in range(count):
        channel, data, side = _REC.unpack_from(buf, offset + k * WORD_RECORD)
        if side & 0xF8:
            raise exc(f"word {k}: reserved sideband bits set ({side:#04x})")
        out.append(StreamWord(data, channel, FlitKind(side & 0x3), bool(side & 0x4)))
    return out


# -- switched path ------------------------------------------------------------

@dataclass(frozen=True)
class EthData:
    seq: int
    ack: int
    words: Tuple[StreamWord, ...]
    src_mac: bytes
    dst_mac: bytes


@dataclass(frozen=True)
class EthAck:
    ack: int
    src_mac: bytes
    dst_mac: bytes


def build_eth_frame(dst: bytes, src: bytes, frame_type: int, seq: int, ack: int,
                    words: Sequence[StreamWord] = ()) -> bytes:
    if frame_type == FRAME_DATA and not 1 <= len(words) <= MAX_FRAME_WORDS:
        raise ValueError(f"DATA frames carry 1..{MAX_FRAME_WORDS} words, got {len(words)}")
    if frame_type == FRAME_ACK and words:
        raise ValueError("ACK frames carry no words")
    body = _ETH_HDR.pack(dst, src, ETHERTYPE, frame_type, seq & 0xFFFFFFFF,
                         ack & 0xFFFFFFFF, len(words)) + _pack_words(words)
    return body + struct.pack(">I", crc32(body))


def eth_decapsulate(frame: bytes, local_mac: Optional[bytes] = None) -> Union[EthData, EthAck]:
    """Parse a switched-path frame. CRC is checked before anything else."""
    if len(frame) < ETH_MIN_LEN:
        raise CorruptFrame(f"frame too short ({len(frame)} bytes)")
    (crc,) = struct.unpack_from(">I", frame, len(frame) - 4)
    if crc32(frame[:-4]) != crc:
        raise CorruptFrame("CRC mismatch")
    dst, src, ethertype, ftype, seq, ack, count = _ETH_HDR.unpack_from(frame, 0)
    if ethertype != ETHERTYPE:
        raise CorruptFrame(f"unexpected ethertype {ethertype:#06x}")
    if len(frame) != ETH_MIN_LEN + count * WORD_RECORD:
        raise CorruptFrame("word count does not match frame length")
    if local_mac is not None and dst != local_mac:
        raise WrongDestination(format_mac(dst))
    if ftype == FRAME_DATA:
        if not 1 <= count <= MAX_FRAME_WORDS:
            raise CorruptFrame(f"DATA frame with {count} words")
        words = _unpack_words(frame, ETH_HEADER_LEN, count, CorruptFrame)
        return EthData(seq, ack, tuple(words), src, dst)
    if ftype == FRAME_ACK:
        if count:
            raise CorruptFrame("ACK frame carrying words")
        return EthAck(ack, src, dst)
    raise CorruptFrame(f"unknown frame type {ftype}")


@dataclass
class RetxState:
    """Go-back-N state toward one peer: our send window plus our receiver for
    the peer's data (whose expected sequence rides back as the ack field)."""

    window_size: int = DEFAULT_WINDOW
    timeout: int = DEFAULT_TIMEOUT
    max_retries: int = DEFAULT_MAX_RETRIES
    next_seq: int = 0
    unacked: Deque[Tuple[int, bytes]] = field(default_factory=deque)
    timer_start: Optional[int] = None
    expected_seq: int = 0
    retransmits: int = 0
    timeouts: int = 0
    dup_drops: int = 0
    consecutive_timeouts: int = 0

    def window_full(self) -> bool:
        return len(self.unacked) >= self.window_size

    @property
    def base(self) -> int:
        return self.unacked[0][0] if self.unacked else self.next_seq


def eth_encapsulate(words: Sequence[StreamWord], src: bytes, dst: bytes, st: RetxState,
                    now: int = 0) -> bytes:
    if not 1 <= len(words) <= MAX_FRAME_WORDS:
        raise ValueError(f"batch of {len(words)} words; split at {MAX_FRAME_WORDS}")
    if st.window_full():
        raise WindowFull(f"{len(st.unacked)} frames unacknowledged")
    frame = build_eth_frame(dst, src, FRAME_DATA, st.next_seq, st.expected_seq, words)
    if not st.unacked:
        st.timer_start = now
    st.unacked.append((st.next_seq, frame))
    st.next_seq += 1
    return frame


def split_batches(words: Sequence, limit: int = MAX_FRAME_WORDS) -> List[list]:
    return [list(words[i:i + limit]) for i in range(0, len(words), limit)]


@dataclass
class RxActions:
    deliver: Tuple[StreamWord, ...] = ()
    ack: Optional[int] = None   # cumulative ACK to send back, if any
    released: int = 0           # frames dropped from our send window


def _apply_ack(st: RetxState, n: int, now: int) -> int:
    released = 0
    while st.unacked and st.unacked[0][0] < n:
        st.unacked.popleft()
        released += 1
    if released:
        st.consecutive_timeouts = 0
        st.timer_start = now if st.unacked else None
    return released


def retx_on_receive(st: RetxState, event: Union[EthData, EthAck], now: int = 0) -> RxActions:
    if isinstance(event, EthAck):
        return RxActions(released=_apply_ack(st, event.ack, now))
    released = _apply_ack(st, event.ack, now)
    if event.seq == st.expected_seq:
        st.expected_seq += 1
        return RxActions(event.words, st.expected_seq, released)
    st.dup_drops += 1
    return RxActions((), st.expected_seq, released)


def retx_on_timeout(st: RetxState, now: int) -> List[bytes]:
    if not st.unacked or st.timer_start is None or now < st.timer_start + st.timeout:
        return []
    st.consecutive_timeouts += 1
    if st.consecutive_timeouts > st.max_retries:
        raise GiveUp(f"frame {st.unacked[0][0]} unacknowledged after {st.max_retries} retries")
    st.timeouts += 1
    st.retransmits += len(st.unacked)
    st.timer_start = now
    return [frame for _, frame in st.unacked]


# -- point-to-point path --------------------------------------------------------

@dataclass
class CreditState:
    capacity: int
    credits: Optional[int] = None

    def __post_init__(self):
        if self.credits is None:
            self.credits = self.capacity

    def grant(self, n: int) -> None:
        self.credits += n
        if self.credits > self.capacity:
            raise MalformedP2pFrame(f"credit return overflows peer buffer ({self.credits} > {self.capacity})")


def p2p_frame(words: Sequence[StreamWord], cs: CreditState, credit_return: int = 0) -> Optional[bytes]:
    """Frame words for the direct link; ``None`` means blocked on credits."""
    if len(words) > cs.credits:
        return None
    if len(words) > 0xFFFF or not 0 <= credit_return <= 0xFFFF:
        raise ValueError("P2P frame fields overflow")
    cs.credits -= len(words)
    return _P2P_HDR.pack(len(words), credit_return) + _pack_words(words)


def p2p_deframe(frame: bytes) -> Tuple[List[StreamWord], int]:
    if len(frame) < P2P_HEADER_LEN:
        raise MalformedP2pFrame(f"frame too short ({len(frame)} bytes)")
    count, credit = _P2P_HDR.unpack_from(frame, 0)
    if len(frame) != P2P_HEADER_LEN + count * WORD_RECORD:
        raise MalformedP2pFrame("word count does not match frame length")
    return _unpack_words(frame, P2P_HEADER_LEN, count, MalformedP2pFrame), credit


# -- per-peer endpoints used by a node -------------------------------------------

@dataclass
class BridgeCounters:
    frames_sent: int = 0
    bytes_sent: int = 0
    words_sent: int = 0
    acks_sent: int = 0
    words_received: int = 0
    frames_received: int = 0


class EthBridge:
    """Switched-path endpoint toward one peer: batching, ARQ, ACK generation."""

    def __init__(self, local: int, peer: int, window=DEFAULT_WINDOW, timeout=DEFAULT_TIMEOUT,
                 max_retries=DEFAULT_MAX_RETRIES, batch_words=MAX_FRAME_WORDS,
                 flush_deadline=DEFAULT_FLUSH_DEADLINE):
        if not 1 <= batch_words <= MAX_FRAME_WORDS:
            raise ValueError(f"batch_words must be in 1..{MAX_FRAME_WORDS}")
        self.local, self.peer = local, peer
        self.src_mac, self.dst_mac = node_mac(local), node_mac(peer)
        self.st = RetxState(window, timeout, max_retries)
        self.batch_words = batch_words
        self.flush_deadline = flush_deadline
        self.staged: List[StreamWord] = []
        self.staged_since = 0
        self.outbox: List[bytes] = []
        self.counters = BridgeCounters()

    def can_accept(self) -> bool:
        return len(self.staged) < self.batch_words

    def stage(self, w: StreamWord, now: int) -> None:
        if not self.staged:
            self.staged_since = now
        self.staged.append(w)

    def receive(self, event, now: int) -> Tuple[StreamWord, ...]:
        act = retx_on_receive(self.st, event, now)
        if act.ack is not None:
            self.outbox.append(build_eth_frame(self.dst_mac, self.src_mac, FRAME_ACK, 0, act.ack))
            self.counters.acks_sent += 1
        if act.deliver:
            self.counters.frames_received += 1
            self.counters.words_received += len(act.deliver)
        return act.deliver

    def tick(self, now: int) -> List[bytes]:
        """Frames to put on the wire this cycle (ACKs, retransmissions, new data)."""
        out = self.outbox
        self.outbox = []
        resent = retx_on_timeout(self.st, now)
        out.extend(resent)
        if self.staged and not self.st.window_full() and (
            len(self.staged) >= self.batch_words or now - self.staged_since >= self.flush_deadline
        ):
            out.append(eth_encapsulate(self.staged, self.src_mac, self.dst_mac, self.st, now))
            self.counters.words_sent += len(self.staged)
            self.staged = []
        self.counters.frames_sent += len(out)
        self.counters.bytes_sent += sum(len(f) for f in out)
        return out

    def quiescent(self) -> bool:
        return not self.staged and not self.st.unacked and not self.outbox


class P2pBridge:
    """Direct-link endpoint toward one peer: credit-gated framing both ways."""

    def __init__(self, local: int, peer: int, peer_buffer_words: int = 64, batch_words=MAX_FRAME_WORDS):
        self.local, self.peer = local, peer
        self.cs = CreditState(peer_buffer_words)
        self.batch_words = batch_words
        self.staged: List[StreamWord] = []
        self.credit_owed = 0   # words our transport consumed, not yet returned
        self.counters = BridgeCounters()

    def can_accept(self) -> bool:
        return len(self.staged) < self.batch_words

    def stage(self, w: StreamWord, now: int) -> None:
        self.staged.append(w)

    def consumed(self, n: int = 1) -> None:
        self.credit_owed += n

    def receive(self, frame: bytes) -> List[StreamWord]:
        words, credit = p2p_deframe(frame)
        if credit:
            self.cs.grant(credit)
        if words:
            self.counters.frames_received += 1
            self.counters.words_received += len(words)
        return words

    def tick(self, now: int) -> List[bytes]:
        n = min(len(self.staged), self.cs.credits)
        if n == 0 and self.credit_owed == 0:
            return []
        ret = min(self.credit_owed, 0xFFFF)
        frame = p2p_frame(self.staged[:n], self.cs, ret)
        self.staged = self.staged[n:]
        self.credit_owed -= ret
        self.counters.frames_sent += 1
        self.counters.bytes_sent += len(frame)
        self.counters.words_sent += n
        return [frame]

    def quiescent(self) -> bool:
        return not self.staged and self.credit_owed == 0 and self.cs.credits == self.cs.capacity
