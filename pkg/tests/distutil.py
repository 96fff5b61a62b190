"""Run a distributed experiment on localhost, one thread per process role."""
import socket
import threading

from meshsplit.partition import manifest_dict, plan
from meshsplit.runtime.distributed import run_node, run_switch


def free_ports(n):
    socks = []
    for _ in range(n):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def make_manifest(cfg):
    n = cfg.partition.node_count
    ports = free_ports(n + 1)
    eps = {"switch": f"127.0.0.1:{ports[0]}", "nodes": [f"127.0.0.1:{p}" for p in ports[1:]]}
    return manifest_dict(plan(cfg.mesh, cfg.partition), eps, cfg.digest())


def run_threads(cfg, manifest=None, kernel=None, timeout_s=30.0, node_cfgs=None):
    """Returns (switch_outcome, [node_outcome]); an outcome is a result or an exception."""
    manifest = manifest or make_manifest(cfg)
    n = cfg.partition.node_count
    out = [None] * (n + 1)

    def role(k):
        try:
            if k == n:
                out[k] = run_switch(cfg, manifest, timeout_s)
            else:
                out[k] = run_node((node_cfgs or {}).get(k, cfg), manifest, k, kernel, timeout_s)
        except BaseException as e:  # surfaced to the test
            out[k] = e

    threads = [threading.Thread(target=role, args=(k,), daemon=True) for k in range(n + 1)]
    threads[n].start()
    for t in threads[:n]:
        t.start()
    for t in threads:
        t.join(timeout_s * 3)
    return out[n], out[:n]


def merged(results):
    trace = [r for res in results for r in res.trace]
    words = {k: v for res in results for k, v in res.words_delivered.items()}
    return trace, words
