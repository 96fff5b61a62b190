"""Deterministic traffic: the chipset memory test plus synthetic patterns."""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .mesh.flit import MASK64, Packet, TileCoord
from .mesh.topology import ConfigError, MeshConfig
from .runtime.chipset import (
    CONSOLE_ONLINE, CONSOLE_PASS, CONSOLE_FAIL, OP_CONSOLE, OP_READ, OP_WRITE, REQUEST_PLANE,
    STATUS_OK, console_record, status_word,
)


@dataclass(frozen=True)
class Memtest:
    words_per_core: int = 16
    sequential_cores: bool = False
    report_status: bool = False
    type: str = field(default="memtest", init=False)

    def __post_init__(self):
        if self.words_per_core < 0:
            raise ConfigError("workload.words_per_core must be >= 0")


@dataclass(frozen=True)
class UniformRandom:
    packets_per_tile: int = 8
    body_len: int = 2
    seed: int = 0
    injection_rate: float = 0.05
    type: str = field(default="uniform_random", init=False)


@dataclass(frozen=True)
class NearestNeighbor:
    packets_per_tile: int = 8
    body_len: int = 2
    seed: int = 0
    injection_rate: float = 0.05
    type: str = field(default="nearest_neighbor", init=False)


@dataclass(frozen=True)
class Hotspot:
    target: Tuple[int, int] = (0, 0)
    packets_per_tile: int = 8
    body_len: int = 2
    seed: int = 0
    injection_rate: float = 0.05
    type: str = field(default="hotspot", init=False)

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(self.target))


@dataclass(frozen=True)
class Idle:
    type: str = field(default="idle", init=False)


Workload = Union[Memtest, UniformRandom, NearestNeighbor, Hotspot, Idle]
WORKLOADS = {cls.__dataclass_fields__["type"].default: cls
             for cls in (Memtest, UniformRandom, NearestNeighbor, Hotspot, Idle)}


def workload_from_dict(d: dict) -> Workload:
    d = dict(d)
    kind = d.pop("type", None)
    cls = WORKLOADS.get(kind)
    if cls is None:
        raise ConfigError(f"workload.type must be one of {sorted(WORKLOADS)}, got {kind!r}")
    known = {k for k, f in cls.__dataclass_fields__.items() if f.init}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError([f"workload: unknown key {k!r}" for k in unknown])
    return cls(**d)


def workload_to_dict(w: Workload) -> dict:
    d = asdict(w)
    if "target" in d:
        d["target"] = list(d["target"])
    return d


def validate_workload(w: Workload, mesh: MeshConfig) -> None:
    errors = []
    if isinstance(w, (UniformRandom, NearestNeighbor, Hotspot)):
        if w.packets_per_tile < 0:
            errors.append("workload.packets_per_tile must be >= 0")
        if not 0 <= w.body_len <= 16383:
            errors.append("workload.body_len must be in 0..16383")
        if not 0.0 < w.injection_rate <= 1.0:
            errors.append("workload.injection_rate must be in (0, 1]")
    if isinstance(w, Hotspot) and not mesh.contains(TileCoord(*w.target)):
        errors.append(f"workload.target {list(w.target)} is outside the mesh")
    if isinstance(w, Memtest):
        if mesh.width > 255:
            errors.append("memtest needs mesh.width <= 255 (chipset address is (width, 0))")
    if errors:
        raise ConfigError(errors)


def core_index(mesh: MeshConfig, c: TileCoord) -> int:
    return c.y * mesh.width + c.x


def memtest_pattern(core: int, i: int) -> int:
    return ((core << 40) ^ ((i + 1) * 0x9E3779B97F4A7C15)) & MASK64


class SequentialGate:
    """Shared by all drivers of one run: lets core k start only after core k-1 finished."""

    def __init__(self):
        self.finished: Dict[int, int] = {}

    def start_cycle(self, core: int) -> Optional[int]:
        if core == 0:
            return 0
        done = self.finished.get(core - 1)
        return None if done is None else done + 1


class _Core:
    __slots__ = ("tile", "index", "step", "waiting", "failures", "done_cycle", "expect")

    def __init__(self, tile, index):
        self.tile = tile
        self.index = index
        self.step = 0
        self.waiting = False
        self.failures = 0
        self.done_cycle = None
        self.expect = None


class MemtestDriver:
    """Per-core sequential memory test against the chipset.

    Each core sends a presence console record, then for every word a WRITE
    followed by a READ that verifies it. A core waits for each response before
    issuing its next request. Cores start one cycle apart unless
    ``sequential_cores`` is set, in which case each waits for its predecessor.
    """

    def __init__(self, w: Memtest, mesh: MeshConfig, tiles: Iterable[TileCoord],
                 gate: Optional[SequentialGate] = None):
        self.w = w
        self.mesh = mesh
        self.chipset = mesh.chipset_coord
        self.cores = {t: _Core(t, core_index(mesh, t)) for t in tiles}
        self.n_steps = 1 + 2 * w.words_per_core + (1 if w.report_status else 0)
        if w.sequential_cores and gate is None:
            gate = SequentialGate()
        self.gate = gate
        self.requests_sent = 0
        self._pending = sorted(self.cores.values(), key=lambda c: c.index)

    def _request(self, core: _Core) -> Packet:
        k, s, base = core.index, core.step, core.index * self.w.words_per_core
        if s == 0:
            core.expect = (status_word(OP_CONSOLE),)
            return Packet(core.tile, self.chipset, REQUEST_PLANE, (OP_CONSOLE, 0, console_record(k, CONSOLE_ONLINE)))
        if s <= 2 * self.w.words_per_core:
            i = (s - 1) // 2
            if (s - 1) % 2 == 0:
                core.expect = (status_word(OP_WRITE),)
                return Packet(core.tile, self.chipset, REQUEST_PLANE, (OP_WRITE, base + i, memtest_pattern(k, i)))
            core.expect = (status_word(OP_READ), memtest_pattern(k, i))
            return Packet(core.tile, self.chipset, REQUEST_PLANE, (OP_READ, base + i))
        code = CONSOLE_FAIL if core.failures else CONSOLE_PASS
        core.expect = (status_word(OP_CONSOLE),)
        return Packet(core.tile, self.chipset, REQUEST_PLANE, (OP_CONSOLE, 0, console_record(k, code)))

    def _start(self, core: _Core) -> Optional[int]:
        if self.w.sequential_cores:
            return self.gate.start_cycle(core.index)
        return core.index

    def generate(self, t: int) -> List[Packet]:
        out = []
        for core in self._pending:
            if core.waiting or core.step >= self.n_steps:
                continue
            start = self._start(core)
            if start is None or t < start:
                continue
            out.append(self._request(core))
            core.waiting = True
            self.requests_sent += 1
        return out

    def on_eject(self, pkt: Packet, t: int) -> None:
        core = self.cores.get(pkt.dest)
        if core is None or pkt.src != self.chipset or not core.waiting:
            return
        if tuple(pkt.body) != core.expect:
            core.failures += 1
        core.waiting = False
        core.step += 1
        if core.step >= self.n_steps:
            core.done_cycle = t
            if self.gate is not None:
                self.gate.finished[core.index] = t
            self._pending = [c for c in self._pending if c is not core]

    def done(self) -> bool:
        return not self._pending

    def next_event(self, t: int) -> Optional[int]:
        """Earliest cycle >= t at which generate() could emit without new input."""
        best = None
        for core in self._pending:
            if core.waiting:
                continue
            s = self._start(core)
            if s is None:
                continue
            s = max(s, t)
            best = s if best is None else min(best, s)
        return best

    def results(self) -> Dict[int, bool]:
        return {c.index: c.step >= self.n_steps and c.failures == 0 for c in self.cores.values()}


class ScheduleDriver:
    """Open-loop traffic replayed from a precomputed per-tile schedule."""

    def __init__(self, schedule: Dict[int, List[Packet]]):
        self.schedule = schedule
        self._times = sorted(schedule)
        self._i = 0
        self.requests_sent = 0

    def generate(self, t: int) -> List[Packet]:
        out = []
        while self._i < len(self._times) and self._times[self._i] <= t:
            out.extend(self.schedule[self._times[self._i]])
            self._i += 1
        self.requests_sent += len(out)
        return out

    def on_eject(self, pkt: Packet, t: int) -> None:
        pass

    def done(self) -> bool:
        return self._i >= len(self._times)

    def next_event(self, t: int) -> Optional[int]:
        return max(self._times[self._i], t) if self._i < len(self._times) else None

    def results(self) -> Dict[int, bool]:
        return {}


def _tile_rng(seed, c: TileCoord) -> random.Random:
    return random.Random(f"{seed}:{c.x}:{c.y}")


def synthetic_schedule(w, mesh: MeshConfig, tiles: Iterable[TileCoord]) -> Dict[int, List[Packet]]:
    """Injection schedule for the given tiles; independent of which node owns them."""
    sched: Dict[int, List[Packet]] = {}
    all_tiles = list(mesh.coords())
    for c in sorted(tiles, key=lambda t: (t.y, t.x)):
        rng = _tile_rng(w.seed, c)
        t = 0
        for _ in range(w.packets_per_tile):
            u = rng.random()
            gap = 0
            # geometric inter-arrival: Bernoulli(rate) trial per cycle
            while u >= w.injection_rate and gap < 10_000:
                gap += 1
                u = rng.random()
            t += gap
            if isinstance(w, UniformRandom):
                if len(all_tiles) == 1:
                    dest = c
                else:
                    dest = c
                    while dest == c:
                        dest = all_tiles[rng.randrange(len(all_tiles))]
            elif isinstance(w, NearestNeighbor):
                if mesh.width > 1:
                    dest = TileCoord((c.x + 1) % mesh.width, c.y)
                else:
                    dest = TileCoord(c.x, (c.y + 1) % mesh.height)
            else:
                dest = TileCoord(*w.target)
            plane = rng.randrange(2)
            body = tuple(rng.getrandbits(64) for _ in range(w.body_len))
            sched.setdefault(t, []).append(Packet(c, dest, plane, body))
            t += 1
    return sched


def make_driver(w: Workload, mesh: MeshConfig, tiles: Sequence[TileCoord],
                gate: Optional[SequentialGate] = None):
    if isinstance(w, Memtest):
        return MemtestDriver(w, mesh, tiles, gate)
    if isinstance(w, Idle):
        return ScheduleDriver({})
    return ScheduleDriver(synthetic_schedule(w, mesh, tiles))


def generate(driver, t: int) -> List[Packet]:
    """Injections for cycle ``t``."""
    return driver.generate(t)
