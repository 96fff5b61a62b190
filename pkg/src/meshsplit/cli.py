"""Command line: ``meshsplit partition|run|compare|report``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path as FsPath
from typing import List, Optional, Sequence

from .config import ExperimentConfig, load_config
from .mesh.topology import ConfigError
from .metrics import MetricsReport, links_csv, render_table
from .partition import manifest_dict, plan as make_plan, summary_lines
from .trace import (
    TraceFormatError, compare_traces, dumps_word_trace, parse_trace, parse_word_trace, write_trace,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_TIMEOUT = 3
EXIT_LINK_FAILURE = 4
EXIT_PEER_UNREACHABLE = 5
EXIT_MANIFEST_MISMATCH = 6

log = logging.getLogger("meshsplit")


def _setup_logging() -> None:
    level = os.environ.get("EMIX_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _config_errors(e: ConfigError) -> int:
    for msg in e.errors:
        print(f"error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def _write(path, text: str) -> None:
    p = FsPath(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True)
    p.write_text(text, encoding="utf-8")


# -- partition -----------------------------------------------------------

def cmd_partition(args) -> int:
    from .runtime.distributed import default_endpoints

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    pl = make_plan(cfg.mesh, cfg.partition)
    eps = default_endpoints(cfg.partition.node_count, args.host, args.base_port)
    man = manifest_dict(pl, eps, cfg.digest())
    _write(args.output, json.dumps(man, indent=1, sort_keys=True) + "\n")
    for line in summary_lines(pl):
        print(line)
    print(f"manifest written to {args.output}")
    return EXIT_OK


# -- run -----------------------------------------------------------------

def _outputs(args, cfg: ExperimentConfig):
    return (args.trace or cfg.run.trace, args.report or cfg.run.report,
            args.word_trace or cfg.run.word_trace)


def _emit(report: MetricsReport, trace, words, paths, quiet: bool) -> None:
    trace_path, report_path, words_path = paths
    if trace_path and trace is not None:
        write_trace(trace_path, trace)
    if report_path:
        _write(report_path, report.dumps())
    if words_path and words is not None:
        _write(words_path, dumps_word_trace(words))
    if not quiet:
        sys.stdout.write(render_table(report))


def cmd_run(args) -> int:
    from .runtime.distributed import DistResult, ManifestMismatch, PeerUnreachable, run_node, run_switch
    from .runtime.node import LinkFailure
    from .runtime.simulated import SimulationTimeout, run_monolithic, run_partitioned

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.max_cycles is not None:
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, max_cycles=args.max_cycles))
    paths = _outputs(args, cfg)
    kernel = None if args.kernel == "auto" else args.kernel
    common = dict(max_cycles=cfg.run.max_cycles, chipset=cfg.chipset, kernel=kernel)
    pl = make_plan(cfg.mesh, cfg.partition)

    def mono():
        return run_monolithic(cfg.mesh, cfg.workload, gateway=pl.gateway, **common)

    try:
        if args.mode == "mono":
            res = mono()
            res.report.seed = cfg.fabric.seed
            _emit(res.report, res.trace, None, paths, args.quiet)
        elif args.mode == "part":
            res = run_partitioned(cfg.mesh, cfg.partition, cfg.fabric, cfg.workload,
                                  bridge=cfg.bridge, **common)
            if not args.no_baseline:
                res.report.set_baseline(mono().report.completion_cycles)
            _emit(res.report, res.trace, res.words_delivered, paths, args.quiet)
        else:
            if args.manifest is None:
                print("error: --mode dist requires --manifest", file=sys.stderr)
                return EXIT_CONFIG
            if (args.node is None) == (not args.switch):
                print("error: --mode dist requires exactly one of --node N or --switch",
                      file=sys.stderr)
                return EXIT_CONFIG
            with open(args.manifest, encoding="utf-8") as f:
                man = json.load(f)
            if args.switch:
                res = run_switch(cfg, man, args.peer_timeout)
                _emit(res.report, None, None, (None, paths[1], None), args.quiet)
            else:
                res = run_node(cfg, man, args.node, kernel, args.peer_timeout)
                _emit(res.report, res.trace, res.words_delivered, paths, args.quiet)
        if isinstance(res, DistResult) and res.report.node is None:
            return EXIT_OK
        if not res.report.success:
            print("error: workload did not complete successfully", file=sys.stderr)
            return EXIT_FAIL
        return EXIT_OK
    except SimulationTimeout as e:
        print(f"error: Timeout: {e}", file=sys.stderr)
        _emit_partial(e, paths)
        return EXIT_TIMEOUT
    except LinkFailure as e:
        print(f"error: LinkFailure: {e}", file=sys.stderr)
        _emit_partial(e, paths)
        return EXIT_LINK_FAILURE
    except ManifestMismatch as e:
        print(f"error: ManifestMismatch: {e}", file=sys.stderr)
        return EXIT_MANIFEST_MISMATCH
    except PeerUnreachable as e:
        print(f"error: PeerUnreachable: {e}", file=sys.stderr)
        return EXIT_PEER_UNREACHABLE


def _emit_partial(e, paths) -> None:
    res = getattr(e, "result", None)
    if res is not None and paths[1]:
        _write(paths[1], res.report.dumps())


# -- compare / report ----------------------------------------------------

def _load_any(spec: str):
    """Parse one file, or a comma-separated list of files of the same kind merged."""
    kinds, recs, words = set(), [], {}  # type: ignore[var-annotated]
    for path in spec.split(","):
        text = FsPath(path).read_text(encoding="utf-8")
        head = json.loads(text.splitlines()[0]) if text.strip() else {}
        if head.get("kind") == "meshsplit.word_trace":
            kinds.add("words")
            for k, v in parse_word_trace(text).items():
                if k in words:
                    raise TraceFormatError(f"channel {k} appears in more than one file")
                words[k] = v
        else:
            kinds.add("trace")
            recs.extend(parse_trace(text))
    if len(kinds) != 1:
        raise TraceFormatError("cannot mix delivery traces and word traces")
    kind = kinds.pop()
    return kind, (words if kind == "words" else recs)


def _compare_words(a: dict, b: dict) -> List[str]:
    out = []
    for key in sorted(set(a) | set(b)):
        wa, wb = a.get(key, []), b.get(key, [])
        if wa == wb:
            continue
        i = next((i for i, (x, y) in enumerate(zip(wa, wb)) if x != y), min(len(wa), len(wb)))
        out.append(f"channel {key[0]}->{key[1]} #{key[2]}: first divergence at word {i} "
                   f"({len(wa)} vs {len(wb)} words)")
    return out


def cmd_compare(args) -> int:
    try:
        ka, a = _load_any(args.a)
        kb, b = _load_any(args.b)
    except (OSError, ValueError, TraceFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if ka != kb:
        print("error: cannot compare a delivery trace with a word trace", file=sys.stderr)
        return EXIT_CONFIG
    if ka == "words":
        diffs = _compare_words(a, b)
        print("Equal" if not diffs else "Diff\n" + "\n".join(diffs))
        return EXIT_OK if not diffs else EXIT_FAIL
    cmp = compare_traces(a, b)
    print(cmp.report())
    return EXIT_OK if cmp.equal else EXIT_FAIL


def cmd_report(args) -> int:
    try:
        rep = MetricsReport.load(args.report)
    except (OSError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(links_csv(rep) if args.format == "csv" else render_table(rep))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshsplit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("partition", help="plan a partition and write the manifest")
    sp.add_argument("config")
    sp.add_argument("-o", "--output", default="manifest.json")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--base-port", type=int, default=47000)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("run", help="run an experiment")
    sp.add_argument("config")
    sp.add_argument("--mode", choices=["mono", "part", "dist"], default="part")
    role = sp.add_mutually_exclusive_group()
    role.add_argument("--node", type=int)
    role.add_argument("--switch", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--manifest")
    sp.add_argument("--trace")
    sp.add_argument("--report")
    sp.add_argument("--word-trace")
    sp.add_argument("--max-cycles", type=int)
    sp.add_argument("--peer-timeout", type=float)
    sp.add_argument("--kernel", choices=["auto", "python", "cython"], default="auto")
    sp.add_argument("--no-baseline", action="store_true",
                    help="skip the unpartitioned reference run in part mode")
    sp.add_argument("-q", "--quiet", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="compare two traces (comma-separated files are merged)")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("report", help="render a report file")
    sp.add_argument("report")
    sp.add_argument("--format", choices=["table", "csv"], default="table")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        return _config_errors(e)


if __name__ == "__main__":
    sys.exit(main())
