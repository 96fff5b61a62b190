"""Run reports: aggregation, JSON serialization and a per-link table."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

REPORT_SCHEMA = 1
REPORT_KIND = "meshsplit.report"
LINK_COLUMNS = ["src_x", "src_y", "dst_x", "dst_y", "plane", "kind", "flits", "utilization"]


def latency_stats(values: Sequence[int]) -> dict:
    if not len(values):
        return {"count": 0, "mean": 0.0, "p50": 0, "p95": 0, "max": 0}
    a = np.asarray(values, dtype=np.int64)
    return {
        "count": int(a.size),
        "mean": round(float(a.mean()), 6),
        "p50": int(np.percentile(a, 50, method="lower")),
        "p95": int(np.percentile(a, 95, method="lower")),
        "max": int(a.max()),
    }


@dataclass
class MetricsReport:
    mode: str = "mono"
    seed: Optional[int] = None
    node: Optional[int] = None
    completion_cycles: int = 0
    cycles_simulated: int = 0
    packets_injected: int = 0
    packets_delivered: int = 0
    flits_injected: int = 0
    flits_ejected: int = 0
    links: List[dict] = field(default_factory=list)
    path_bytes: Dict[str, int] = field(default_factory=lambda: {"p2p": 0, "switched": 0})
    cross_cut_bytes: int = 0
    latency: Dict[str, dict] = field(default_factory=dict)
    bridge: Dict[str, int] = field(default_factory=dict)
    switch: Dict[str, int] = field(default_factory=dict)
    workload: Dict[str, object] = field(default_factory=dict)
    validation: Dict[str, int] = field(default_factory=dict)
    baseline_completion_cycles: Optional[int] = None
    overhead_ratio: Optional[float] = None
    errors: List[str] = field(default_factory=list)
    kernel: str = ""

    @property
    def success(self) -> bool:
        if self.mode == "dist":
            # a node's own injections and ejections need not balance
            return not self.errors
        return not self.errors and self.packets_delivered == self.packets_injected

    def set_baseline(self, cycles: int) -> None:
        self.baseline_completion_cycles = cycles
        self.overhead_ratio = round(self.completion_cycles / cycles, 6) if cycles else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = REPORT_KIND
        d["schema_version"] = REPORT_SCHEMA
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        if d.pop("kind", REPORT_KIND) != REPORT_KIND or d.pop("schema_version", None) != REPORT_SCHEMA:
            raise ValueError("not a schema-1 meshsplit report")
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path) -> "MetricsReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


def links_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LINK_COLUMNS)
    for row in report.links:
        w.writerow([row[c] for c in LINK_COLUMNS])
    return buf.getvalue()


def render_table(report: MetricsReport) -> str:
    lat = report.latency.get("all", latency_stats([]))
    cut = report.latency.get("cross_cut", latency_stats([]))
    rows = [
        ("mode", report.mode),
        ("seed", report.seed),
        ("completion cycles", report.completion_cycles),
        ("packets delivered", f"{report.packets_delivered} / {report.packets_injected}"),
        ("p2p bytes", report.path_bytes.get("p2p", 0)),
        ("switched bytes", report.path_bytes.get("switched", 0)),
        ("cross-cut bytes", report.cross_cut_bytes),
        ("latency p50/p95/max", f"{lat['p50']} / {lat['p95']} / {lat['max']}"),
        ("cross-cut latency p50/p95/max", f"{cut['p50']} / {cut['p95']} / {cut['max']}"),
        ("retransmits", report.bridge.get("retransmits", 0)),
        ("dup drops", report.bridge.get("dup_drops", 0)),
        ("corrupt frames", report.bridge.get("corrupt_frames", 0)),
    ]
    if report.overhead_ratio is not None:
        rows.append(("overhead ratio vs baseline", report.overhead_ratio))
    if report.errors:
        rows.append(("errors", "; ".join(report.errors)))
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
    busiest = sorted(report.links, key=lambda r: -r["flits"])[:5]
    if busiest:
        lines.append("busiest links:")
        for r in busiest:
            lines.append(f"  ({r['src_x']},{r['src_y']})->({r['dst_x']},{r['dst_y']}) plane {r['plane']} "
                         f"{r['kind']}: {r['flits']} flits, util {r['utilization']:.3f}")
    return "\n".join(lines) + "\n"


def summarize(nodes, fabric=None, cycles: int = 0, mode: str = "mono", seed=None,
              node: Optional[int] = None, plan=None, kernel: str = "") -> MetricsReport:
    """Aggregate node and fabric counters after a run."""
    rep = MetricsReport(mode=mode, seed=seed, node=node, cycles_simulated=cycles, kernel=kernel)
    rep.completion_cycles = max((n.last_eject_cycle + 1 for n in nodes), default=0)
    rep.packets_injected = sum(n.packets_injected for n in nodes)
    rep.packets_delivered = sum(n.packets_ejected for n in nodes)
    rep.flits_injected = sum(n.engine.flits_injected for n in nodes)
    rep.flits_ejected = sum(n.engine.flits_ejected for n in nodes)
    span = rep.completion_cycles
    cut_pairs = set()
    if plan is not None:
        cut_pairs = {(c.src, c.dst) for c in plan.cuts}
    for n in nodes:
        for src, dst, plane, port, flits in n.engine.link_stats():
            if not flits:
                continue
            kind = "eject" if src == dst else ("cut" if (src, dst) in cut_pairs else "mesh")
            rep.links.append({"src_x": src.x, "src_y": src.y, "dst_x": dst.x, "dst_y": dst.y,
                              "plane": plane, "kind": kind, "flits": flits,
                              "utilization": round(flits / span, 6) if span else 0.0})
    rep.links.sort(key=lambda r: (r["src_y"], r["src_x"], r["dst_y"], r["dst_x"], r["plane"]))
    if fabric is not None:
        rep.path_bytes = {"p2p": fabric.p2p_bytes, "switched": fabric.switched_bytes}
        rep.switch = fabric.segment.counters()
    else:
        rep.path_bytes = {"p2p": sum(n.frame_bytes_out[k] for n in nodes for k in n.frame_bytes_out
                                     if k.value == "p2p"),
                          "switched": sum(n.frame_bytes_out[k] for n in nodes for k in n.frame_bytes_out
                                          if k.value == "switched")}
    rep.cross_cut_bytes = sum(sum(n.frame_bytes_out.values()) for n in nodes)

    lat_all = [l for n in nodes for l, _ in n.latencies]
    by_path = {"p2p": [], "switched": []}
    for n in nodes:
        for l, path in n.latencies:
            if path is not None:
                by_path[path].append(l)
    rep.latency = {
        "all": latency_stats(lat_all),
        "cross_cut": latency_stats(by_path["p2p"] + by_path["switched"]),
        "p2p": latency_stats(by_path["p2p"]),
        "switched": latency_stats(by_path["switched"]),
    }

    bridge: Dict[str, int] = {}
    for n in nodes:
        for k, v in n.bridge_counters().items():
            bridge[k] = bridge.get(k, 0) + v
    rep.bridge = bridge

    results = {}
    console = []
    for n in nodes:
        results.update(n.driver.results())
        if n.chipset is not None:
            console = list(n.chipset.console)
    rep.workload = {
        "cores_total": len(results),
        "cores_passed": sum(1 for ok in results.values() if ok),
        "console_lines": len(console),
    }
    rep.validation = {"credit_violations": sum(n.credit_violations for n in nodes)}
    return rep
