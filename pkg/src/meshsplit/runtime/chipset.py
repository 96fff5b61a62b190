"""Off-mesh peripheral complex: word memory and a console, reached via the chip bridge.

Requests arrive on plane 0 with ``body = (op, address[, data])``; responses go
back to the requester on plane 1. Response bodies start with a status word
``(op << 8) | status``; READ responses append the stored word.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

from ..mesh.flit import MASK64, Packet, TileCoord

OP_READ = 0
OP_WRITE = 1
OP_CONSOLE = 2
STATUS_OK = 0
STATUS_ERROR = 1
REQUEST_PLANE = 0
RESPONSE_PLANE = 1

# console words with bit 63 set are status records rather than characters
CONSOLE_RECORD = 1 << 63
CONSOLE_ONLINE = 0
CONSOLE_PASS = 1
CONSOLE_FAIL = 2
_RECORD_TEXT = {CONSOLE_ONLINE: "online", CONSOLE_PASS: "memtest PASS", CONSOLE_FAIL: "memtest FAIL"}


class MalformedRequest(ValueError):
    pass


def status_word(op: int, status: int = STATUS_OK) -> int:
    return ((op & 0xFF) << 8) | status


def console_record(core: int, code: int) -> int:
    return CONSOLE_RECORD | (code << 32) | (core & 0xFFFFFFFF)


@dataclass
class ChipsetModel:
    memory_words: int = 1 << 20
    console_enabled: bool = True
    memory: Dict[int, int] = field(default_factory=dict)
    console: List[str] = field(default_factory=list)
    _line: List[str] = field(default_factory=list)
    requests: int = 0
    errors: int = 0

    def read(self, addr: int) -> int:
        return self.memory.get(addr, 0)

    def write(self, addr: int, value: int) -> None:
        self.memory[addr] = value & MASK64

    def console_put(self, word: int) -> None:
        if not self.console_enabled:
            return
        if word & CONSOLE_RECORD:
            code = (word >> 32) & 0x7FFFFFFF
            core = word & 0xFFFFFFFF
            self.console.append(f"core {core}: {_RECORD_TEXT.get(code, f'status {code}')}")
            return
        ch = chr(word & 0xFF)
        if ch == "\n":
            self.console.append("".join(self._line))
            self._line.clear()
        else:
            self._line.append(ch)

    def check_address(self, addr: int) -> None:
        if not 0 <= addr < self.memory_words:
            raise MalformedRequest(f"address {addr} outside {self.memory_words}-word memory")


def chipset_service(model: ChipsetModel, req: Packet, chipset_coord: TileCoord) -> Packet:
    """Serve one request packet and build the response addressed to its source."""
    model.requests += 1
    body = req.body
    op = body[0] if body else -1
    try:
        if op == OP_READ and len(body) >= 2:
            model.check_address(body[1])
            resp = (status_word(OP_READ), model.read(body[1]))
        elif op == OP_WRITE and len(body) >= 3:
            model.check_address(body[1])
            model.write(body[1], body[2])
            resp = (status_word(OP_WRITE),)
        elif op == OP_CONSOLE and len(body) >= 3:
            model.console_put(body[2])
            resp = (status_word(OP_CONSOLE),)
        else:
            raise MalformedRequest(f"unknown op {op} or short body ({len(body)} words)")
    except MalformedRequest:
        model.errors += 1
        resp = (status_word(op if op >= 0 else 0xFF, STATUS_ERROR),)
    return Packet(chipset_coord, req.src, RESPONSE_PLANE, resp)
