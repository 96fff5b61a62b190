import os
import subprocess
import sys
import threading
import time
from pathlib import Path

import json

import pytest

from meshsplit.config import loads_config
from meshsplit.runtime.distributed import ManifestMismatch, PeerUnreachable, run_node, run_switch
from meshsplit.runtime.simulated import run_partitioned
from meshsplit.trace import compare_traces

from distutil import make_manifest, merged, run_threads

ROOT = Path(__file__).parent.parent


def cfg_text(w, h, n, pairs="[]", loss=0.0, words=4):
    return (f"mesh: {{width: {w}, height: {h}}}\n"
            f"partition: {{strategy: vertical, node_count: {n}, p2p_pairs: {pairs}}}\n"
            f"fabric: {{loss_prob: {loss}, seed: 2}}\n"
            f"bridge: {{timeout_cycles: 256}}\n"
            f"workload: {{type: memtest, words_per_core: {words}}}\n")


def simulated(cfg):
    return run_partitioned(cfg.mesh, cfg.partition, cfg.fabric, cfg.workload, bridge=cfg.bridge,
                           max_cycles=cfg.run.max_cycles)


@pytest.mark.parametrize("text", [
    cfg_text(2, 2, 2),
    cfg_text(4, 2, 4, "[[0, 1]]"),
    cfg_text(4, 2, 4, "[[1, 2]]", loss=0.15),
], ids=["2x2-switched", "4x2-dual", "4x2-lossy"])
def test_dist_matches_simulated(text):
    cfg = loads_config(text)
    sw, nodes = run_threads(cfg)
    for r in [sw, *nodes]:
        assert not isinstance(r, BaseException), repr(r)
    assert all(r.report.success for r in nodes)
    sim = simulated(cfg)
    trace, words = merged(nodes)
    assert words == sim.words_delivered
    assert compare_traces(trace, sim.trace).equal
    assert sorted(trace) == sorted(sim.trace)


def test_manifest_mismatch_on_config_digest():
    cfg = loads_config(cfg_text(2, 2, 2))
    man = make_manifest(cfg)
    with pytest.raises(ManifestMismatch):
        run_node(cfg.with_seed(99), man, 0, timeout_s=1.0)


def test_manifest_mismatch_at_handshake():
    cfg = loads_config(cfg_text(2, 2, 2))
    man = make_manifest(cfg)
    other = dict(man, schema_note="edited")
    # node 0 carries an edited manifest: its hash differs from the switch's
    out = {}

    def switch():
        try:
            out["sw"] = run_switch(cfg, man, 3.0)
        except BaseException as e:
            out["sw"] = e
    t = threading.Thread(target=switch, daemon=True)
    t.start()
    with pytest.raises((ManifestMismatch, PeerUnreachable)):
        run_node(cfg, other, 0, timeout_s=3.0)
    t.join(10)
    assert isinstance(out["sw"], ManifestMismatch)


def test_peer_unreachable_without_switch():
    cfg = loads_config(cfg_text(2, 2, 2))
    t0 = time.monotonic()
    with pytest.raises(PeerUnreachable):
        run_node(cfg, make_manifest(cfg), 0, timeout_s=0.5)
    assert time.monotonic() - t0 < 5


def _cli(*args):
    env = dict(os.environ, PYTHONPATH=str(ROOT / "src"))
    return subprocess.Popen([sys.executable, "-m", "meshsplit", *args], env=env,
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)


def test_cli_processes_and_switch_loss(tmp_path):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(cfg_text(2, 2, 2, words=4))
    cfg = loads_config(cfg_path.read_text())
    man_path = tmp_path / "m.json"
    man_path.write_text(json.dumps(make_manifest(cfg)))
    common = [str(cfg_path), "--mode", "dist", "--manifest", str(man_path), "-q", "--peer-timeout", "20"]
    sw = _cli("run", *common, "--switch")
    nodes = [_cli("run", *common, "--node", str(k), "--word-trace", str(tmp_path / f"w{k}.json"))
             for k in range(2)]
    assert [p.wait(60) for p in nodes] == [0, 0], [p.stderr.read() for p in nodes]
    assert sw.wait(60) == 0

    # a switch that disappears mid-run is reported as an unreachable peer
    cfg_path.write_text(cfg_text(2, 2, 2, words=4000))
    cfg = loads_config(cfg_path.read_text())
    man_path.write_text(json.dumps(make_manifest(cfg)))
    common[-1] = "5"
    sw = _cli("run", *common, "--switch")
    nodes = [_cli("run", *common, "--node", str(k)) for k in range(2)]
    time.sleep(2.0)
    sw.kill()
    codes = [p.wait(60) for p in nodes]
    assert codes == [5, 5], [p.stderr.read() for p in nodes]
