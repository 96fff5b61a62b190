"""Compare the compiled and pure-Python router kernels on the same runs.

    python3 benchmarks/bench_kernel.py [--repeat 3] [--words 16]

Each run's delivery trace is checked for byte equality across kernels.
"""
import argparse
import time

from meshsplit.fabric import FabricConfig
from meshsplit.mesh import MeshConfig, _backend
from meshsplit.partition import PartitionSpec
from meshsplit.runtime.simulated import run_monolithic, run_partitioned
from meshsplit.trace import dumps_trace
from meshsplit.workload import Memtest, UniformRandom

PAIRS = ((0, 1), (2, 3), (4, 5), (6, 7))


def cases(words):
    mesh = MeshConfig(8, 8)
    yield "mono 8x8 uniform", lambda k: run_monolithic(
        mesh, UniformRandom(packets_per_tile=40, body_len=4, seed=1), kernel=k)
    yield f"part 8x8/8 memtest {words}w", lambda k: run_partitioned(
        mesh, PartitionSpec("vertical", 8, 0, PAIRS), FabricConfig(), Memtest(words), kernel=k)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--words", type=int, default=16)
    args = ap.parse_args()
    kernels = ["python"] + (["cython"] if _backend.compiled is not None else [])
    if len(kernels) == 1:
        print("compiled kernel not built; run `python3 setup.py build_ext --inplace`")
    print(f"{'case':32} {'kernel':8} {'best s':>8} {'cycles':>8} {'kcyc/s':>8}")
    for name, fn in cases(args.words):
        traces = {}
        for k in kernels:
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                res = fn(k)
                best = min(best, time.perf_counter() - t0)
            traces[k] = dumps_trace(res.trace)
            cyc = res.report.cycles_simulated
            print(f"{name:32} {k:8} {best:8.3f} {cyc:8d} {cyc / best / 1e3:8.1f}")
        same = len(set(traces.values())) == 1
        print(f"{'':32} traces identical across kernels: {same}")


if __name__ == "__main__":
    main()
