"""Single-scheduler runs: the unpartitioned reference and the in-process partitioned system."""
from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..fabric import Fabric, FabricConfig
from ..mesh import _backend
from ..mesh.engine import Rect
from ..mesh.flit import TileCoord
from ..mesh.topology import MeshConfig
from ..metrics import MetricsReport, summarize
from ..partition import Path, PartitionSpec, Plan, plan as make_plan
from ..workload import Memtest, SequentialGate, Workload, make_driver, validate_workload
from .chipset import ChipsetModel
from .node import BridgeConfig, LinkFailure, Node, Outgoing

log = logging.getLogger(__name__)


class SimulationTimeout(RuntimeError):
    def __init__(self, cycles, result=None):
        super().__init__(f"workload incomplete after {cycles} cycles")
        self.cycles = cycles
        self.result = result


@dataclass(frozen=True)
class ChipsetConfig:
    memory_words: int = 1 << 20
    console: bool = True


@dataclass
class RunResult:
    report: MetricsReport
    trace: List[tuple]
    nodes: List[Node]
    fabric: Optional[Fabric] = None
    plan: Optional[Plan] = None
    words_sent: Dict = field(default_factory=dict)
    words_delivered: Dict = field(default_factory=dict)

    @property
    def console(self) -> List[str]:
        for n in self.nodes:
            if n.chipset is not None:
                return list(n.chipset.console)
        return []

    def link_traces(self):
        return [n.engine.link_trace_array() for n in self.nodes]


def duplicate_deliveries(sent: Dict, delivered: Dict) -> int:
    """Words delivered beyond, or out of step with, the sent stream of their channel."""
    dups = 0
    for key, got in delivered.items():
        want = sent.get(key, [])
        if len(got) > len(want):
            dups += len(got) - len(want)
        dups += sum(1 for a, b in zip(got, want) if a != b)
    return dups


def _loop(nodes: List[Node], fabric: Optional[Fabric], max_cycles: int, fast_forward: bool) -> int:
    t = 0
    while True:
        if t >= max_cycles:
            raise SimulationTimeout(max_cycles)
        for n in nodes:
            arrivals = fabric.arrivals(n.index, t) if fabric is not None else ()
            for out in n.step(t, arrivals):
                if out.path is Path.P2P:
                    fabric.send_p2p(n.index, out.peer, out.frame, t)
                else:
                    fabric.send_switched(n.index, out.frame, t)
        if fabric is not None:
            fabric.process(t)
        if all(n.done() for n in nodes) and (fabric is None or fabric.idle()):
            return t + 1
        nxt = t + 1
        if fast_forward:
            cands = [n.next_event(t + 1) for n in nodes]
            if fabric is not None:
                cands.append(fabric.next_event())
            cands = [c for c in cands if c is not None]
            if cands:
                nxt = max(t + 1, min(cands))
        t = nxt


def _chipset_model(cfg: ChipsetConfig) -> ChipsetModel:
    return ChipsetModel(cfg.memory_words, cfg.console)


def run_monolithic(
    mesh: MeshConfig,
    workload: Workload,
    max_cycles: int = 1_000_000,
    gateway: TileCoord = TileCoord(0, 0),
    chipset: ChipsetConfig = ChipsetConfig(),
    kernel: Optional[str] = None,
    record_links: bool = False,
    check_credits: bool = False,
    fast_forward: bool = True,
) -> RunResult:
    validate_workload(workload, mesh)
    rect = Rect(0, 0, mesh.width, mesh.height)
    driver = make_driver(workload, mesh, list(rect.coords()))
    node = Node(0, mesh, rect, gateway, driver, chipset=_chipset_model(chipset), kernel=kernel,
                record_links=record_links, check_credits=check_credits)
    try:
        cycles = _loop([node], None, max_cycles, fast_forward)
    except SimulationTimeout as e:
        rep = summarize([node], None, max_cycles, mode="mono", kernel=_kernel_name(kernel))
        rep.errors.append(str(e))
        e.result = RunResult(rep, node.trace, [node])
        raise
    rep = summarize([node], None, cycles, mode="mono", kernel=_kernel_name(kernel))
    rep.bridge["duplicate_deliveries"] = 0
    return RunResult(rep, node.trace, [node])


def _kernel_name(kernel):
    return kernel or _backend.KERNEL_NAME


def build_nodes(pl: Plan, mesh: MeshConfig, workload: Workload, bridge: BridgeConfig,
                chipset: ChipsetConfig, kernel=None, record_links=False, check_credits=False,
                only: Optional[int] = None, record_words=True) -> List[Node]:
    gate = SequentialGate() if isinstance(workload, Memtest) and workload.sequential_cores else None
    inject_times = defaultdict(deque)
    nodes = []
    for i, rect in enumerate(pl.pmap.rects):
        if only is not None and i != only:
            continue
        driver = make_driver(workload, mesh, list(rect.coords()), gate)
        cs = _chipset_model(chipset) if i == pl.spec.chipset_node else None
        nodes.append(Node(i, mesh, rect, pl.gateway, driver, pl, bridge, cs, kernel=kernel,
                          record_links=record_links, check_credits=check_credits,
                          record_words=record_words, inject_times=inject_times))
    return nodes


def run_partitioned(
    mesh: MeshConfig,
    spec: PartitionSpec,
    fabric_cfg: FabricConfig,
    workload: Workload,
    max_cycles: int = 1_000_000,
    bridge: BridgeConfig = BridgeConfig(),
    chipset: ChipsetConfig = ChipsetConfig(),
    kernel: Optional[str] = None,
    record_links: bool = False,
    check_credits: bool = False,
    fast_forward: bool = True,
) -> RunResult:
    validate_workload(workload, mesh)
    pl = make_plan(mesh, spec)
    nodes = build_nodes(pl, mesh, workload, bridge, chipset, kernel, record_links, check_credits)
    fabric = Fabric(len(nodes), spec.p2p_pairs, fabric_cfg)

    def finish(cycles, error=None):
        rep = summarize(nodes, fabric, cycles, mode="part", seed=fabric_cfg.seed, plan=pl,
                        kernel=_kernel_name(kernel))
        sent = {k: v for n in nodes for k, v in n.words_sent.items()}
        got = {k: v for n in nodes for k, v in n.words_delivered.items()}
        rep.bridge["duplicate_deliveries"] = duplicate_deliveries(sent, got)
        if error:
            rep.errors.append(error)
        trace = [r for n in nodes for r in n.trace]
        return RunResult(rep, trace, nodes, fabric, pl, sent, got)

    try:
        cycles = _loop(nodes, fabric, max_cycles, fast_forward)
    except SimulationTimeout as e:
        e.result = finish(max_cycles, str(e))
        raise
    except LinkFailure as e:
        e.result = finish(max_cycles, f"LinkFailure: {e}")
        raise
    return finish(cycles)


def run_simulated(mesh, spec: Optional[PartitionSpec], fabric_cfg, workload, **kw) -> RunResult:
    if spec is None or spec.node_count == 1 and not spec.p2p_pairs:
        gateway = TileCoord(0, 0)
        if spec is not None:
            gateway = make_plan(mesh, spec).gateway
        kw.pop("bridge", None)
        return run_monolithic(mesh, workload, gateway=gateway, **kw)
    return run_partitioned(mesh, spec, fabric_cfg, workload, **kw)
