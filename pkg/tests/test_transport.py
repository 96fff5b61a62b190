import random

import pytest
from hypothesis import given, settings, strategies as st

from meshsplit.mesh import FlitKind
from meshsplit.transport import CdcFifo, Demux, Mux, StreamWord, UnknownChannel, cdc_pop, cdc_push, mux


def drain(m):
    out = []
    while (w := mux(m)) is not None:
        out.append(w)
    return out


def put_packet(m, c, n_body, base=0):
    if n_body == 0:
        m.enqueue(c, base, int(FlitKind.HEADTAIL))
        return
    m.enqueue(c, base, int(FlitKind.HEAD))
    for k in range(n_body - 1):
        m.enqueue(c, base + 1 + k, int(FlitKind.BODY))
    m.enqueue(c, base + n_body, int(FlitKind.TAIL))


def test_single_channel_in_order():
    m = Mux([0])
    put_packet(m, 0, 3)
    assert [w.data for w in drain(m)] == [0, 1, 2, 3]


def test_two_channels_lowest_first_and_contiguous():
    m = Mux([3, 7])
    put_packet(m, 7, 1)
    put_packet(m, 3, 1)
    got = [(w.channel, w.kind) for w in drain(m)]
    assert got == [(3, FlitKind.HEAD), (3, FlitKind.TAIL), (7, FlitKind.HEAD), (7, FlitKind.TAIL)]


def test_empty_is_idle():
    assert mux(Mux([1, 2])) is None


def test_stalls_mid_packet_until_tail_arrives():
    m = Mux([0, 1])
    m.enqueue(0, 1, int(FlitKind.HEAD))
    put_packet(m, 1, 0)
    assert m.pop().channel == 0
    assert m.pop() is None  # channel 1 must wait for channel 0's tail
    m.enqueue(0, 2, int(FlitKind.TAIL))
    assert [w.channel for w in drain(m)] == [0, 1]


def test_round_robin_resumes_after_last_served():
    m = Mux([0, 1, 2])
    for c in (0, 0, 1, 2):
        put_packet(m, c, 0, base=c)
    assert [w.channel for w in drain(m)] == [0, 1, 2, 0]


def test_demux_unknown_channel():
    d = Demux([0, 1])
    with pytest.raises(UnknownChannel):
        d.demux(StreamWord(5, 9999, FlitKind.HEADTAIL))
    assert d.unknown_channel == 1
    assert d.deliver(StreamWord(5, 9999, FlitKind.HEADTAIL)) is False
    assert d.unknown_channel == 2


def test_random_interleaving_preserves_channels():
    rng = random.Random(11)
    chans = list(range(10))
    m, d = Mux(chans), Demux(chans)
    sent = {c: [] for c in chans}
    for k in range(100):
        c = rng.choice(chans)
        n = rng.randrange(0, 4)
        put_packet(m, c, n, base=k * 10)
    for c, q in m.queues.items():
        sent[c] = list(q)
    current = None
    for w in drain(m):
        if current is not None:
            assert w.channel == current, "another channel appeared inside a packet"
        current = None if w.kind.is_tail else w.channel
        d.demux(w)
    for c in chans:
        assert [(f.payload, int(f.kind)) for f in d.queues[c]] == sent[c]


def test_cdc_capacity_and_empty():
    f = CdcFifo(depth=4)
    w = StreamWord(1, 0, FlitKind.HEADTAIL)
    assert [cdc_push(f, w) for _ in range(5)] == [True] * 4 + [False]
    assert f.occupancy == 4
    for _ in range(4):
        assert cdc_pop(f) is w
    assert cdc_pop(f) is None


def test_cdc_slow_pop_side_latency():
    f = CdcFifo(depth=32, push_period=1, pop_period=2)
    src = [StreamWord(i, 0, FlitKind.BODY) for i in range(100)]
    out, t = [], 0
    i = 0
    while len(out) < 100:
        if f.push_tick(t) and i < 100 and f.push(src[i]):
            i += 1
        if f.pop_tick(t) and (w := f.pop()) is not None:
            out.append((t, w))
        assert 0 <= f.occupancy <= f.depth
        assert f.pushed == f.popped + f.occupancy
        t += 1
    assert [w.data for _, w in out] == list(range(100))
    # one word per two cycles on the pop side
    assert out[-1][0] >= 2 * 99


@settings(max_examples=50, deadline=None)
@given(ops=st.lists(st.booleans(), max_size=200), depth=st.integers(1, 8))
def test_cdc_never_loses(ops, depth):
    f = CdcFifo(depth)
    offered, got, rejected = 0, [], 0
    for push in ops:
        if push:
            if f.push(StreamWord(offered, 0, FlitKind.BODY)):
                offered += 1
            else:
                rejected += 1
                assert f.occupancy == depth
        elif (w := f.pop()) is not None:
            got.append(w.data)
        assert f.pushed == f.popped + f.occupancy
    while (w := f.pop()) is not None:
        got.append(w.data)
    assert got == list(range(offered))
