"""Regenerate the golden frame fixtures.

Deliberately shares no code with the package: bytes are laid out by hand and
the CRC is a bitwise CRC-32 (reflected, poly 0xEDB88320). Run from the repo
root: ``python3 tests/fixtures/gen_frames.py``.
"""
import json
import random
from pathlib import Path

OUT = Path(__file__).parent / "frames"


def crc32_bitwise(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0xEDB88320 if crc & 1 else crc >> 1
    return crc ^ 0xFFFFFFFF


def be(value: int, n: int) -> bytes:
    return value.to_bytes(n, "big")


def mac(node: int) -> bytes:
    return bytes([0x02, 0x45, 0x4D, 0x49, 0x58, node])


def records(words) -> bytes:
    out = b""
    for channel, data, kind, last in words:
        out += be(channel, 2) + be(data, 8) + bytes([kind | (4 if last else 0)])
    return out


def eth(dst, src, ftype, seq, ack, words) -> bytes:
    body = mac(dst) + mac(src) + be(0x88B5, 2) + bytes([ftype]) + be(seq, 4) + be(ack, 4)
    body += be(len(words), 2) + records(words)
    return body + be(crc32_bitwise(body), 4)


def p2p(words, credit) -> bytes:
    return be(len(words), 2) + be(credit, 2) + records(words)


def rand_words(rng, n):
    ws = []
    for i in range(n):
        ws.append([rng.randrange(0, 64), rng.getrandbits(64), rng.randrange(4), i == n - 1])
    return ws


def main():
    rng = random.Random(20240601)
    cases = []
    data_sizes = [1, 1, 2, 3, 4, 5, 8, 13, 21, 34, 64, 100, 133, 134]
    for k, n in enumerate(data_sizes):
        dst, src = rng.randrange(8), rng.randrange(8)
        seq = [0, 1, 0xFFFFFFFF][k] if k < 3 else rng.getrandbits(32)
        cases.append({"path": "switched", "frame_type": "data", "dst": dst, "src": src,
                      "seq": seq, "ack": rng.getrandbits(32), "words": rand_words(rng, n)})
    for ack in (0, 31, 0xFFFFFFFE):
        cases.append({"path": "switched", "frame_type": "ack", "dst": rng.randrange(8),
                      "src": rng.randrange(8), "seq": 0, "ack": ack, "words": []})
    for n, credit in ((0, 5), (1, 0), (16, 64)):
        cases.append({"path": "p2p", "credit_return": credit, "words": rand_words(rng, n)})

    OUT.mkdir(exist_ok=True)
    index = []
    for i, c in enumerate(cases):
        if c["path"] == "switched":
            ftype = 0 if c["frame_type"] == "data" else 1
            frame = eth(c["dst"], c["src"], ftype, c["seq"], c["ack"], c["words"])
            name = f"{i:02d}_eth_{c['frame_type']}_{len(c['words'])}w.bin"
        else:
            frame = p2p(c["words"], c["credit_return"])
            name = f"{i:02d}_p2p_{len(c['words'])}w.bin"
        (OUT / name).write_bytes(frame)
        index.append({"file": name, "length": len(frame), **c})
    (OUT / "index.json").write_text(json.dumps({"schema_version": 1, "frames": index}, indent=1) + "\n")
    print(f"wrote {len(index)} fixtures to {OUT}")


if __name__ == "__main__":
    main()
