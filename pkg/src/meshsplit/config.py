"""Experiment configuration document (YAML), validated section by section."""
from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from .fabric import FabricConfig
from .mesh.topology import ConfigError, MeshConfig
from .partition import PartitionSpec, Strategy, plan
from .runtime.node import BridgeConfig
from .runtime.simulated import ChipsetConfig
from .workload import Memtest, Workload, validate_workload, workload_from_dict, workload_to_dict

CONFIG_SCHEMA = 1
log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    max_cycles: int = 1_000_000
    trace: Optional[str] = None
    report: Optional[str] = None
    word_trace: Optional[str] = None
    peer_timeout_s: float = 10.0

    def __post_init__(self):
        errors = []
        if self.max_cycles < 1:
            errors.append("run.max_cycles must be >= 1")
        if self.peer_timeout_s <= 0:
            errors.append("run.peer_timeout_s must be > 0")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class ExperimentConfig:
    mesh: MeshConfig
    partition: PartitionSpec = PartitionSpec()
    fabric: FabricConfig = FabricConfig()
    bridge: BridgeConfig = BridgeConfig()
    workload: Workload = Memtest()
    chipset: ChipsetConfig = ChipsetConfig()
    run: RunConfig = RunConfig()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, fabric=dataclasses.replace(self.fabric, seed=seed))

    def with_fabric(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, fabric=dataclasses.replace(self.fabric, **kw))

    def to_dict(self) -> dict:
        part = {
            "strategy": self.partition.strategy.value,
            "node_count": self.partition.node_count,
            "chipset_node": self.partition.chipset_node,
            "p2p_pairs": [list(p) for p in self.partition.p2p_pairs],
        }
        if self.partition.grid_cols is not None:
            part["grid"] = {"cols": self.partition.grid_cols, "rows": self.partition.grid_rows}
        mesh = dataclasses.asdict(self.mesh)
        mesh.pop("planes")
        return {
            "schema_version": CONFIG_SCHEMA,
            "mesh": mesh,
            "partition": part,
            "fabric": dataclasses.asdict(self.fabric),
            "bridge": dataclasses.asdict(self.bridge),
            "workload": workload_to_dict(self.workload),
            "chipset": dataclasses.asdict(self.chipset),
            "run": dataclasses.asdict(self.run),
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        """Hash of the canonical form; run-section paths are excluded so roles can differ."""
        d = self.to_dict()
        d.pop("run")
        return hashlib.sha256(yaml.safe_dump(d, sort_keys=True).encode()).hexdigest()


_SECTIONS = ("schema_version", "mesh", "partition", "fabric", "bridge", "workload", "chipset", "run")


def _fields(cls) -> List[str]:
    return [f.name for f in dataclasses.fields(cls) if f.init]


def _section(doc: dict, name: str, cls, errors: List[str], allowed=None, convert=None):
    raw = doc.get(name, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        errors.append(f"{name}: expected a mapping")
        return None
    allowed = allowed if allowed is not None else _fields(cls)
    bad = sorted(set(raw) - set(allowed))
    errors.extend(f"{name}: unknown key {k!r}" for k in bad)
    kw = {k: v for k, v in raw.items() if k in allowed}
    try:
        if convert:
            kw = convert(kw)
        return cls(**kw)
    except ConfigError as e:
        errors.extend(e.errors)
    except (TypeError, ValueError) as e:
        errors.append(f"{name}: {e}")
    return None


def _partition_kw(kw: dict) -> dict:
    grid = kw.pop("grid", None)
    if grid is not None:
        if not isinstance(grid, dict) or set(grid) - {"cols", "rows"}:
            raise ConfigError("partition.grid must be a mapping with keys cols, rows")
        kw["grid_cols"] = grid.get("cols")
        kw["grid_rows"] = grid.get("rows")
    if "strategy" in kw:
        try:
            kw["strategy"] = Strategy(kw["strategy"])
        except ValueError:
            raise ConfigError(f"partition.strategy must be one of "
                              f"{[s.value for s in Strategy]}, got {kw['strategy']!r}")
    kw["p2p_pairs"] = tuple(tuple(p) for p in kw.get("p2p_pairs") or ())
    return kw


def config_from_dict(doc: Any) -> ExperimentConfig:
    """Build and validate; raises ConfigError listing every failed check."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    errors: List[str] = []
    errors.extend(f"unknown top-level key {k!r}" for k in sorted(set(doc) - set(_SECTIONS)))
    version = doc.get("schema_version", CONFIG_SCHEMA)
    if version != CONFIG_SCHEMA:
        errors.append(f"schema_version {version!r} unsupported (expected {CONFIG_SCHEMA})")
    if "mesh" not in doc:
        errors.append("mesh section is required")
    mesh = _section(doc, "mesh", MeshConfig, errors,
                    allowed=["width", "height", "router_buffer_depth", "credits_per_link"])
    part = _section(doc, "partition", PartitionSpec, errors,
                    allowed=["strategy", "node_count", "chipset_node", "p2p_pairs", "grid"],
                    convert=_partition_kw)
    fabric = _section(doc, "fabric", FabricConfig, errors)
    bridge = _section(doc, "bridge", BridgeConfig, errors)
    chipset = _section(doc, "chipset", ChipsetConfig, errors)
    run = _section(doc, "run", RunConfig, errors)
    workload = None
    raw_w = doc.get("workload", {"type": "memtest"})
    try:
        workload = workload_from_dict(raw_w if isinstance(raw_w, dict) else {"type": raw_w})
    except ConfigError as e:
        errors.extend(e.errors)
    except TypeError as e:
        errors.append(f"workload: {e}")
    if mesh is not None and part is not None:
        try:
            plan(mesh, part)
        except ConfigError as e:
            errors.extend(e.errors)
    if mesh is not None and workload is not None:
        try:
            validate_workload(workload, mesh)
        except ConfigError as e:
            errors.extend(e.errors)
    if errors:
        raise ConfigError(errors)
    if fabric.p2p_latency >= fabric.switched_latency:
        log.warning("fabric.p2p_latency (%d) is not below the switched latency (%d)",
                    fabric.p2p_latency, fabric.switched_latency)
    return ExperimentConfig(mesh, part, fabric, bridge, workload, chipset, run)


def loads_config(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}")
    return config_from_dict(doc)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return loads_config(text)
