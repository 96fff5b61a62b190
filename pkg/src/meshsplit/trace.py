"""Delivery traces: one JSON object per delivered packet, after a header line.

Header::

    {"kind": "meshsplit.trace", "schema_version": 1}

Record::

    {"cycle": 17, "src": [0, 1], "dest": [8, 0], "plane": 0, "body": [1, 3, 99]}
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

TRACE_SCHEMA = 1
TRACE_KIND = "meshsplit.trace"
WORD_TRACE_KIND = "meshsplit.word_trace"

Record = Tuple[int, int, int, int, int, int, Tuple[int, ...]]   # cycle, sx, sy, dx, dy, plane, body
Stream = Tuple[Tuple[int, int], Tuple[int, int], int]


def sort_records(records: Iterable[Record]) -> List[Record]:
    return sorted(records, key=lambda r: (r[0], r[4], r[3], r[5], r[2], r[1]))


def dumps_trace(records: Iterable[Record]) -> str:
    lines = [json.dumps({"kind": TRACE_KIND, "schema_version": TRACE_SCHEMA}, sort_keys=True)]
    for cyc, sx, sy, dx, dy, plane, body in sort_records(records):
        lines.append(json.dumps({"cycle": cyc, "src": [sx, sy], "dest": [dx, dy],
                                 "plane": plane, "body": list(body)}, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_trace(path, records: Iterable[Record]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_trace(records))


class TraceFormatError(ValueError):
    pass


def parse_trace(text: str) -> List[Record]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("empty trace")
    head = json.loads(lines[0])
    if head.get("kind") != TRACE_KIND or head.get("schema_version") != TRACE_SCHEMA:
        raise TraceFormatError(f"not a schema-{TRACE_SCHEMA} trace: {lines[0][:80]}")
    out = []
    for n, ln in enumerate(lines[1:], start=2):
        try:
            d = json.loads(ln)
            out.append((int(d["cycle"]), int(d["src"][0]), int(d["src"][1]), int(d["dest"][0]),
                        int(d["dest"][1]), int(d["plane"]), tuple(int(w) for w in d["body"])))
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise TraceFormatError(f"line {n}: {e}") from e
    return out


def read_trace(path) -> List[Record]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def streams(records: Iterable[Record]) -> Dict[Stream, List[Tuple[int, ...]]]:
    """Per-(src, dest, plane) body sequences in delivery order."""
    out: Dict[Stream, List[Tuple[int, ...]]] = defaultdict(list)
    for cyc, sx, sy, dx, dy, plane, body in sort_records(records):
        out[((sx, sy), (dx, dy), plane)].append(tuple(body))
    return dict(out)


@dataclass
class Divergence:
    stream: Stream
    index: int
    a: Optional[Tuple[int, ...]]
    b: Optional[Tuple[int, ...]]

    def describe(self) -> str:
        (sx, sy), (dx, dy), p = self.stream
        return (f"stream ({sx},{sy})->({dx},{dy}) plane {p}: first difference at packet {self.index}: "
                f"{_fmt(self.a)} vs {_fmt(self.b)}")


def _fmt(body):
    return "<missing>" if body is None else "[" + ", ".join(f"{w:#x}" for w in body) + "]"


@dataclass
class TraceComparison:
    diffs: List[Divergence] = field(default_factory=list)

    @property
    def equal(self) -> bool:
        return not self.diffs

    def __bool__(self):
        return self.equal

    def report(self) -> str:
        if self.equal:
            return "Equal"
        return "\n".join(["Diff"] + ["  " + d.describe() for d in self.diffs])


def compare_traces(a: Sequence[Record], b: Sequence[Record]) -> TraceComparison:
    """Compare per-stream packet sequences, ignoring cycle stamps."""
    sa, sb = streams(a), streams(b)
    diffs = []
    for key in sorted(set(sa) | set(sb)):
        la, lb = sa.get(key, []), sb.get(key, [])
        for i in range(max(len(la), len(lb))):
            x = la[i] if i < len(la) else None
            y = lb[i] if i < len(lb) else None
            if x != y:
                diffs.append(Divergence(key, i, x, y))
                break
    return TraceComparison(diffs)


def dumps_word_trace(words: Dict[Tuple[int, int, int], List[Tuple[int, int]]]) -> str:
    doc = {
        "kind": WORD_TRACE_KIND,
        "schema_version": TRACE_SCHEMA,
        "channels": [
            {"src_node": a, "dst_node": b, "channel_id": c, "words": [list(w) for w in ws]}
            for (a, b, c), ws in sorted(words.items())
        ],
    }
    return json.dumps(doc, sort_keys=True) + "\n"


def parse_word_trace(text: str) -> Dict[Tuple[int, int, int], List[Tuple[int, int]]]:
    doc = json.loads(text)
    if doc.get("kind") != WORD_TRACE_KIND:
        raise TraceFormatError("not a word trace")
    return {(ch["src_node"], ch["dst_node"], ch["channel_id"]): [tuple(w) for w in ch["words"]]
            for ch in doc["channels"]}
