from pathlib import Path

import pytest

from meshsplit.config import ExperimentConfig, config_from_dict, load_config, loads_config
from meshsplit.mesh.topology import ConfigError
from meshsplit.partition import Strategy
from meshsplit.workload import UniformRandom

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


@pytest.mark.parametrize("path", CONFIGS, ids=[p.name for p in CONFIGS])
def test_shipped_configs_roundtrip(path):
    cfg = load_config(path)
    again = loads_config(cfg.dumps())
    assert again == cfg and again.digest() == cfg.digest()


def test_defaults_from_minimal_document():
    cfg = loads_config("mesh: {width: 4, height: 4}\n")
    assert cfg.partition.node_count == 1 and cfg.fabric.p2p_latency == 4
    assert cfg.workload.type == "memtest"


def test_grid_section():
    cfg = loads_config("mesh: {width: 4, height: 4}\n"
                       "partition: {strategy: grid, node_count: 4, grid: {cols: 2, rows: 2}}\n")
    assert cfg.partition.strategy is Strategy.GRID and cfg.partition.grid_cols == 2


def test_every_error_reported_at_once():
    doc = {
        "mesh": {"width": 8, "height": 8, "colour": "red"},
        "partition": {"strategy": "vertical", "node_count": 3},
        "fabric": {"loss_prob": 2.0},
        "extra": 1,
        "workload": {"type": "uniform_random", "injection_rate": 0.0},
    }
    with pytest.raises(ConfigError) as e:
        config_from_dict(doc)
    text = "\n".join(e.value.errors)
    for needle in ("colour", "extra", "loss_prob", "injection_rate", "IndivisibleMesh"):
        assert needle in text, needle


def test_missing_mesh_and_bad_yaml():
    with pytest.raises(ConfigError, match="mesh section is required"):
        loads_config("partition: {node_count: 1}\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        loads_config("mesh: [unclosed\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/file.yaml")


def test_digest_tracks_seed_but_not_run_paths():
    cfg = load_config(CONFIGS[0])
    import dataclasses
    other_run = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, trace="x.jsonl"))
    assert other_run.digest() == cfg.digest()
    assert cfg.with_seed(cfg.fabric.seed + 1).digest() != cfg.digest()


def test_latency_ordering_warning(caplog):
    loads_config("mesh: {width: 2, height: 2}\nfabric: {p2p_latency: 50}\n")
    assert "switched latency" in caplog.text


def test_synthetic_workload_fields():
    cfg = loads_config("mesh: {width: 2, height: 2}\n"
                       "workload: {type: uniform_random, packets_per_tile: 3, seed: 9}\n")
    assert cfg.workload == UniformRandom(packets_per_tile=3, seed=9)
