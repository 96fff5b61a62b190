"""End-to-end acceptance criteria 1-9; each prints one PASS/FAIL line."""
import dataclasses
import time
from pathlib import Path

import pytest

from meshsplit.bridge import CorruptFrame, eth_decapsulate
from meshsplit.config import load_config, loads_config
from meshsplit.fabric import FabricConfig
from meshsplit.mesh import MeshConfig
from meshsplit.mesh.validate import check_link_trace
from meshsplit.partition import PartitionSpec, cut_links, partition, plan
from meshsplit.runtime.node import BridgeConfig
from meshsplit.runtime.simulated import run_monolithic, run_partitioned
from meshsplit.trace import compare_traces, dumps_trace
from meshsplit.workload import Hotspot, Memtest, NearestNeighbor, UniformRandom

from distutil import merged, run_threads
from oracles import bit_flips, brute_cut_links, load_fixtures, valid_counts

ROOT = Path(__file__).parent.parent
FLAGSHIP = load_config(ROOT / "configs" / "flagship_8x8_vertical8.yaml")

# (name, mesh, partition, workload) for criterion 1; the first row is the flagship run
COMBOS = [
    ("flagship 8x8 vertical/8", FLAGSHIP.mesh, FLAGSHIP.partition, FLAGSHIP.workload),
    ("8x8 horizontal/4", MeshConfig(8, 8), PartitionSpec("horizontal", 4, 0, ((0, 1), (2, 3))),
     UniformRandom(packets_per_tile=6, body_len=3, seed=5)),
    ("8x8 grid 4x2", MeshConfig(8, 8), PartitionSpec("grid", 8, 1, ((0, 4),), 4, 2), Memtest(8)),
    ("4x4 grid 2x2", MeshConfig(4, 4), PartitionSpec("grid", 4, 0, ((0, 1),), 2, 2),
     NearestNeighbor(packets_per_tile=10, body_len=5, seed=2)),
    ("6x3 vertical/3", MeshConfig(6, 3), PartitionSpec("vertical", 3, 2, ((1, 2),)),
     Hotspot(target=(0, 2), packets_per_tile=6, seed=9)),
    ("4x8 horizontal/8", MeshConfig(4, 8), PartitionSpec("horizontal", 8, 3, ((0, 1), (6, 7))), Memtest(4)),
    ("2x1 vertical/2", MeshConfig(2, 1), PartitionSpec("vertical", 2), UniformRandom(packets_per_tile=20)),
]

_runs = {}


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def combo_runs():
    """Criterion 1 runs, shared with criterion 3."""
    if not _runs:
        t0 = time.monotonic()
        for name, mesh, spec, w in COMBOS:
            gw = plan(mesh, spec).gateway
            mono = run_monolithic(mesh, w, gateway=gw, record_links=True, check_credits=True)
            part = run_partitioned(mesh, spec, FabricConfig(), w, record_links=True, check_credits=True)
            _runs[name] = (mono, part)
        _runs["_elapsed"] = time.monotonic() - t0
    return _runs


def test_criterion_1_partition_transparency(capsys):
    runs = combo_runs()
    bad = [name for name, *_ in COMBOS
           if not (runs[name][1].report.success and compare_traces(runs[name][0].trace, runs[name][1].trace).equal)]
    sizes = sum(len(runs[name][0].trace) for name, *_ in COMBOS)
    el = runs["_elapsed"]
    verdict(capsys, 1, not bad and el < 60,
            f"{len(COMBOS)} combos Equal ({sizes} packets), {el:.1f}s" if not bad else f"Diff in {bad}")


@pytest.mark.parametrize("loss", [0.05, 0.1, 0.2])
def test_criterion_2_arq_reliability(capsys, loss):
    # 64 cores x 64 words on the flagship partition; retransmit timeout 256 cycles
    w = Memtest(words_per_core=64)
    bridge = BridgeConfig(timeout_cycles=256)
    if "lossless" not in _runs:
        _runs["lossless"] = run_partitioned(FLAGSHIP.mesh, FLAGSHIP.partition, FabricConfig(seed=11), w,
                                            bridge=bridge, max_cycles=5_000_000)
    ref = _runs["lossless"]
    res = run_partitioned(FLAGSHIP.mesh, FLAGSHIP.partition, FabricConfig(loss_prob=loss, seed=11), w,
                          bridge=bridge, max_cycles=5_000_000)
    rep = res.report
    ok = (rep.success and rep.workload["cores_passed"] == 64
          and compare_traces(res.trace, ref.trace).equal
          and rep.bridge["retransmits"] > 0 and rep.bridge["duplicate_deliveries"] == 0)
    verdict(capsys, 2, ok, f"loss {loss}: {rep.completion_cycles} cycles, {rep.bridge['retransmits']} "
                           f"retransmits, {rep.switch['loss_drops']} drops, "
                           f"{rep.bridge['duplicate_deliveries']} duplicates, trace Equal")


def test_criterion_3_wormhole_invariants(capsys):
    runs = combo_runs()
    traces = violations = credit = flits = 0
    for name, *_ in COMBOS:
        for res in runs[name]:
            for arr in res.link_traces():
                traces += 1
                flits += len(arr)
                violations += len(check_link_trace(arr))
            credit += res.report.validation["credit_violations"]
    verdict(capsys, 3, violations == 0 and credit == 0 and flits > 0,
            f"{traces} link traces, {flits} flit records, {violations} interleavings, "
            f"{credit} credit violations")


def test_criterion_4_overhead_ordering(capsys):
    fab = FabricConfig()
    assert (fab.p2p_latency, fab.switched_latency) == (4, 20)
    w = FLAGSHIP.workload
    pl = plan(FLAGSHIP.mesh, FLAGSHIP.partition)
    mono = run_monolithic(FLAGSHIP.mesh, w, gateway=pl.gateway)
    dual = run_partitioned(FLAGSHIP.mesh, FLAGSHIP.partition, fab, w)
    dual.report.set_baseline(mono.report.completion_cycles)
    switched = run_partitioned(FLAGSHIP.mesh, dataclasses.replace(FLAGSHIP.partition, p2p_pairs=()), fab, w)
    m, d, s = mono.report.completion_cycles, dual.report.completion_cycles, switched.report.completion_cycles
    ok = d > m and s >= d and dual.report.overhead_ratio == round(d / m, 6)
    verdict(capsys, 4, ok, f"mono {m} < dual {d} <= all-switched {s} cycles; "
                           f"overhead ratio {dual.report.overhead_ratio:.3f} (reference 3.0)")


def test_criterion_5_path_split(capsys):
    rep = combo_runs()[COMBOS[0][0]][1].report
    p, s = rep.path_bytes["p2p"], rep.path_bytes["switched"]
    verdict(capsys, 5, p > 0 and s > 0 and p + s == rep.cross_cut_bytes,
            f"p2p {p} + switched {s} = {p + s}, cross-cut {rep.cross_cut_bytes}")


def test_criterion_6_cut_link_oracle(capsys):
    cases = 0
    for w in range(1, 9):
        for h in range(1, 9):
            for strategy, dim in (("vertical", w), ("horizontal", h)):
                for n in valid_counts(dim):
                    mesh = MeshConfig(w, h)
                    got = [(c.src, c.dst, c.plane)
                           for c in cut_links(mesh, partition(mesh, PartitionSpec(strategy, n)))]
                    assert got == brute_cut_links(strategy, w, h, n), (w, h, strategy, n)
                    cases += 1
    verdict(capsys, 6, True, f"{cases} (mesh, strategy, node count) cases match brute force")


def test_criterion_7_golden_vectors(capsys):
    fixtures = load_fixtures()
    assert len(fixtures) == 20
    data = [(e, f) for e, f in fixtures if e.get("frame_type") == "data"]
    flips = missed = 0
    for entry, frame in data:
        ev = eth_decapsulate(frame)
        assert [[w.channel, w.data, int(w.kind), w.last] for w in ev.words] == entry["words"]
        for _, _, bad in bit_flips(frame):
            flips += 1
            try:
                eth_decapsulate(bad)
                missed += 1
            except CorruptFrame:
                pass
    verdict(capsys, 7, missed == 0 and len(data) == 14,
            f"20 fixtures decode; {flips} single-bit flips over {len(data)} DATA frames, {missed} undetected")


def test_criterion_8_mode_equivalence(capsys):
    cfg = loads_config("mesh: {width: 2, height: 2}\n"
                       "partition: {strategy: vertical, node_count: 2}\n"
                       "fabric: {seed: 4, loss_prob: 0.1}\n"
                       "bridge: {timeout_cycles: 256}\n"
                       "workload: {type: memtest, words_per_core: 16}\n")
    t0 = time.monotonic()
    sw, nodes = run_threads(cfg, timeout_s=20.0)
    el = time.monotonic() - t0
    errs = [r for r in [sw, *nodes] if isinstance(r, BaseException)]
    assert not errs, errs
    _, words = merged(nodes)
    sim = run_partitioned(cfg.mesh, cfg.partition, cfg.fabric, cfg.workload, bridge=cfg.bridge)
    n_words = sum(len(v) for v in words.values())
    verdict(capsys, 8, words == sim.words_delivered and n_words > 0 and el < 30,
            f"{len(words)} channels, {n_words} words identical to simulated mode, {el:.1f}s")


def test_criterion_9_determinism(capsys, tmp_path):
    blobs = []
    for k in range(3):
        res = run_partitioned(FLAGSHIP.mesh, FLAGSHIP.partition, FLAGSHIP.fabric, FLAGSHIP.workload)
        p = tmp_path / f"trace{k}.jsonl"
        p.write_text(dumps_trace(res.trace))
        blobs.append(p.read_bytes())
    verdict(capsys, 9, blobs[0] == blobs[1] == blobs[2] and len(blobs[0]) > 0,
            f"3 runs, {len(blobs[0])} bytes each, byte-identical")
