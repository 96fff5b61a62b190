import json
from pathlib import Path

import pytest

from meshsplit.cli import (
    EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_TIMEOUT, main,
)
from meshsplit.metrics import MetricsReport

CONFIGS = Path(__file__).parent.parent / "configs"
SMALL = str(CONFIGS / "small_2x2.yaml")


def test_partition_writes_manifest(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["partition", str(CONFIGS / "flagship_8x8_vertical8.yaml"), "-o", str(out)]) == EXIT_OK
    man = json.loads(out.read_text())
    assert len(man["channels"]) == 336 and len(man["endpoints"]["nodes"]) == 8
    assert "boundary 1-2: 48 cut links, switched" in capsys.readouterr().out


def test_mono_and_part_traces_compare_equal(tmp_path, capsys):
    a, b, rep = tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "r.json"
    assert main(["run", SMALL, "--mode", "mono", "--trace", str(a), "-q"]) == EXIT_OK
    assert main(["run", SMALL, "--mode", "part", "--trace", str(b), "--report", str(rep), "-q"]) == EXIT_OK
    capsys.readouterr()
    assert main(["compare", str(a), str(b)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "Equal"
    r = MetricsReport.load(rep)
    assert r.overhead_ratio is not None and r.overhead_ratio > 1.0


def test_compare_reports_diff(tmp_path, capsys):
    a = tmp_path / "a.jsonl"
    main(["run", SMALL, "--mode", "mono", "--trace", str(a), "-q"])
    lines = a.read_text().splitlines()
    rec = json.loads(lines[3])
    rec["body"][0] ^= 1
    lines[3] = json.dumps(rec, sort_keys=True)
    b = tmp_path / "b.jsonl"
    b.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["compare", str(a), str(b)]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert out.startswith("Diff") and "first difference at packet" in out


def test_compare_bad_input(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind": "nope"}\n')
    assert main(["compare", str(bad), str(bad)]) == EXIT_CONFIG


def test_report_csv(tmp_path, capsys):
    rep = tmp_path / "r.json"
    main(["run", SMALL, "--mode", "part", "--report", str(rep), "-q", "--no-baseline"])
    capsys.readouterr()
    assert main(["report", str(rep), "--format", "csv"]) == EXIT_OK
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0] == "src_x,src_y,dst_x,dst_y,plane,kind,flits,utilization" and len(rows) > 1
    assert main(["report", str(rep)]) == EXIT_OK
    assert "completion cycles" in capsys.readouterr().out


def test_seed_flag_overrides_config(tmp_path):
    rep = tmp_path / "r.json"
    main(["run", SMALL, "--mode", "part", "--seed", "42", "--report", str(rep), "-q", "--no-baseline"])
    assert MetricsReport.load(rep).seed == 42
    main(["run", SMALL, "--mode", "part", "--report", str(rep), "-q", "--no-baseline"])
    assert MetricsReport.load(rep).seed == 1


def test_timeout_exit_code(tmp_path):
    rep = tmp_path / "r.json"
    assert main(["run", SMALL, "--mode", "part", "--max-cycles", "20", "--report", str(rep), "-q"]) == EXIT_TIMEOUT
    assert MetricsReport.load(rep).errors


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("mesh: {width: 8, height: 8}\npartition: {node_count: 3}\n")
    assert main(["run", str(cfg), "-q"]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_dist_requires_role_and_manifest(tmp_path):
    assert main(["run", SMALL, "--mode", "dist", "--node", "0"]) == EXIT_CONFIG
    m = tmp_path / "m.json"
    main(["partition", SMALL, "-o", str(m)])
    assert main(["run", SMALL, "--mode", "dist", "--manifest", str(m)]) == EXIT_CONFIG
