import pytest

from meshsplit.bridge import (
    ETH_MIN_LEN, FRAME_ACK, FRAME_DATA, MAX_FRAME_WORDS, CorruptFrame, CreditState, EthAck, EthBridge,
    EthData, GiveUp, MalformedP2pFrame, P2pBridge, RetxState, WindowFull, WrongDestination,
    build_eth_frame, crc32, eth_decapsulate, eth_encapsulate, node_mac, p2p_deframe, p2p_frame,
    retx_on_receive, retx_on_timeout, split_batches,
)
from meshsplit.mesh import FlitKind
from meshsplit.transport import StreamWord

from fixtures.gen_frames import crc32_bitwise
from oracles import bit_flips, load_fixtures

FIXTURES = load_fixtures()


def sw(data, channel=0, kind=FlitKind.HEADTAIL, last=False):
    return StreamWord(data, channel, kind, last)


def fixture_words(entry):
    return [StreamWord(d, c, FlitKind(k), bool(l)) for c, d, k, l in entry["words"]]


def test_crc_check_value():
    assert crc32(b"123456789") == 0xCBF43926 == crc32_bitwise(b"123456789")


@pytest.mark.parametrize("entry,frame", FIXTURES, ids=[e["file"] for e, _ in FIXTURES])
def test_golden_decode_and_encode(entry, frame):
    assert len(frame) == entry["length"]
    words = fixture_words(entry)
    if entry["path"] == "p2p":
        got, credit = p2p_deframe(frame)
        assert got == words and credit == entry["credit_return"]
        assert p2p_frame(words, CreditState(64), entry["credit_return"]) == frame
        return
    ev = eth_decapsulate(frame)
    assert len(frame) == ETH_MIN_LEN + 11 * len(words)
    ftype = FRAME_DATA if entry["frame_type"] == "data" else FRAME_ACK
    if ftype == FRAME_DATA:
        assert isinstance(ev, EthData)
        assert (ev.seq, ev.ack, list(ev.words)) == (entry["seq"], entry["ack"], words)
    else:
        assert isinstance(ev, EthAck) and ev.ack == entry["ack"]
    assert ev.src_mac == node_mac(entry["src"]) and ev.dst_mac == node_mac(entry["dst"])
    enc = build_eth_frame(node_mac(entry["dst"]), node_mac(entry["src"]), ftype,
                          entry["seq"], entry["ack"], words)
    assert enc == frame


def test_sampled_bit_flips_rejected():
    entry, frame = FIXTURES[4]
    for i, b, bad in bit_flips(frame):
        with pytest.raises(CorruptFrame):
            eth_decapsulate(bad)


def test_truncated_and_wrong_destination():
    _, frame = FIXTURES[0]
    with pytest.raises(CorruptFrame):
        eth_decapsulate(frame[:ETH_MIN_LEN - 1])
    with pytest.raises(CorruptFrame):
        eth_decapsulate(frame[:-1])
    entry = FIXTURES[0][0]
    eth_decapsulate(frame, node_mac(entry["dst"]))
    with pytest.raises(WrongDestination):
        eth_decapsulate(frame, node_mac((entry["dst"] + 1) % 8))


def test_frame_word_limits():
    with pytest.raises(ValueError):
        build_eth_frame(node_mac(0), node_mac(1), FRAME_DATA, 0, 0, [])
    with pytest.raises(ValueError):
        build_eth_frame(node_mac(0), node_mac(1), FRAME_DATA, 0, 0, [sw(0)] * (MAX_FRAME_WORDS + 1))
    assert [len(b) for b in split_batches(list(range(300)))] == [134, 134, 32]


def test_reserved_sideband_bits_rejected():
    frame = bytearray(p2p_frame([sw(1)], CreditState(4)))
    frame[-1] |= 0x80
    with pytest.raises(MalformedP2pFrame):
        p2p_deframe(bytes(frame))


def _pair():
    a, b = RetxState(window_size=4, timeout=10, max_retries=2), RetxState(window_size=4, timeout=10)
    return a, b, node_mac(0), node_mac(1)


def test_in_order_delivery_and_ack():
    a, b, ma, mb = _pair()
    f0 = eth_encapsulate([sw(1)], ma, mb, a, 0)
    f1 = eth_encapsulate([sw(2)], ma, mb, a, 0)
    act = retx_on_receive(b, eth_decapsulate(f0), 5)
    assert [w.data for w in act.deliver] == [1] and act.ack == 1
    act = retx_on_receive(b, eth_decapsulate(f1), 6)
    assert act.ack == 2
    assert retx_on_receive(a, EthAck(2, mb, ma), 7).released == 2
    assert not a.unacked and a.timer_start is None


def test_lost_frame_go_back_n():
    a, b, ma, mb = _pair()
    frames = [eth_encapsulate([sw(k)], ma, mb, a, 0) for k in range(3)]
    # frame 0 lost; 1 and 2 are discarded as out of order
    for f in frames[1:]:
        act = retx_on_receive(b, eth_decapsulate(f), 3)
        assert act.deliver == () and act.ack == 0
    assert b.dup_drops == 2
    assert retx_on_timeout(a, 9) == []
    resent = retx_on_timeout(a, 10)
    assert resent == frames and a.retransmits == 3 and a.timeouts == 1
    got = []
    for f in resent:
        got += [w.data for w in retx_on_receive(b, eth_decapsulate(f), 12).deliver]
    assert got == [0, 1, 2] and b.expected_seq == 3


def test_duplicate_after_retransmit_dropped():
    a, b, ma, mb = _pair()
    f = eth_encapsulate([sw(9)], ma, mb, a, 0)
    assert retx_on_receive(b, eth_decapsulate(f), 1).deliver
    act = retx_on_receive(b, eth_decapsulate(f), 2)
    assert act.deliver == () and act.ack == 1 and b.dup_drops == 1


def test_window_full_and_give_up():
    a, _, ma, mb = _pair()
    for k in range(4):
        eth_encapsulate([sw(k)], ma, mb, a, 0)
    with pytest.raises(WindowFull):
        eth_encapsulate([sw(5)], ma, mb, a, 0)
    retx_on_timeout(a, 10)
    retx_on_timeout(a, 20)
    with pytest.raises(GiveUp):
        retx_on_timeout(a, 30)


def test_piggybacked_ack_releases_window():
    a, b, ma, mb = _pair()
    eth_encapsulate([sw(1)], ma, mb, a, 0)
    retx_on_receive(b, eth_decapsulate(a.unacked[0][1]), 1)
    back = eth_encapsulate([sw(2)], mb, ma, b, 2)
    act = retx_on_receive(a, eth_decapsulate(back), 3)
    assert act.released == 1 and [w.data for w in act.deliver] == [2]


def test_eth_bridge_flush_deadline():
    br = EthBridge(0, 1, flush_deadline=3)
    br.stage(sw(1), 0)
    assert br.tick(1) == [] and br.tick(2) == []
    out = br.tick(3)
    assert len(out) == 1 and br.counters.words_sent == 1
    assert not br.quiescent()


def test_p2p_credits_block_and_return():
    cs = CreditState(2)
    assert p2p_frame([sw(1), sw(2)], cs) is not None and cs.credits == 0
    assert p2p_frame([sw(3)], cs) is None
    cs.grant(2)
    with pytest.raises(MalformedP2pFrame):
        cs.grant(1)


def test_p2p_bridge_roundtrip_credit_flow():
    a, b = P2pBridge(0, 1, peer_buffer_words=3), P2pBridge(1, 0, peer_buffer_words=3)
    for k in range(5):
        a.stage(sw(k), 0)
    (f,) = a.tick(0)
    got = b.receive(f)
    assert [w.data for w in got] == [0, 1, 2] and a.tick(1) == []
    b.consumed(3)
    (ret,) = b.tick(2)
    assert p2p_deframe(ret) == ([], 3)
    a.receive(ret)
    (f,) = a.tick(3)
    assert [w.data for w in b.receive(f)] == [3, 4]
