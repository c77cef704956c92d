"""Shared builders for the test suite, cached so graphs build once."""

import functools

from windec.circuit import build_memory_circuit
from windec.dem import build_memory_dem
from windec.graph import decompose_to_graph
from windec.windows import plan_windows


@functools.lru_cache(maxsize=None)
def memory_circuit(d, rounds, p, basis='Z'):
    return build_memory_circuit(d, rounds, p, basis)


@functools.lru_cache(maxsize=None)
def memory_dem(d, rounds, p, basis='Z'):
    return build_memory_dem(d, rounds, p, basis)


@functools.lru_cache(maxsize=None)
def memory_graph(d, rounds, p, basis='Z'):
    return decompose_to_graph(memory_dem(d, rounds, p, basis), basis)


@functools.lru_cache(maxsize=None)
def plan(rounds, buffer, core):
    return plan_windows(rounds, buffer, core)


def graph_from_edges(edges, n_real, *, basis='Z', seed=0):
    """Hand-built DecodingGraph from (u, v, prob[, logical]) tuples; v=-1 is
    the space boundary.  Perturbed weights follow the production rule so the
    oracle and the decoder see identical tie-breaking."""
    import numpy as np

    from windec.graph import DecodingGraph

    eu, ev, ep, elog = [], [], [], []
    for entry in edges:
        u, v, prob = entry[:3]
        eu.append(u)
        ev.append(v)
        ep.append(prob)
        elog.append(entry[3] if len(entry) > 3 else 0)
    eu = np.asarray(eu, dtype=np.int32)
    ev = np.asarray(ev, dtype=np.int32)
    ep = np.asarray(ep, dtype=np.float64)
    elog = np.asarray(elog, dtype=np.uint8)
    ew = np.log((1.0 - ep) / ep)
    rng = np.random.default_rng(seed)
    eid = rng.integers(0, 2 ** 64, size=len(eu), dtype=np.uint64)
    w_min = float(ew.min()) if len(ew) else 1.0
    ewp = ew + (eid.astype(np.float64) / 2.0 ** 64) * 1e-9 * w_min
    v_layer = np.ones(n_real, dtype=np.int32)
    v_pos = np.arange(n_real, dtype=np.int32)
    v_slot = np.arange(n_real, dtype=np.int32)
    e_minlayer = np.ones(len(eu), dtype=np.int32)
    return DecodingGraph(basis, 3, 1, max(n_real, 1), 1, 1, n_real, 0,
                         v_layer, v_pos, v_slot, eu, ev, ep, ew, ewp, elog,
                         e_minlayer, eid, w_min)


def random_small_graph(rng, max_vertices=8, max_edges=25):
    """Random connected graph with boundary access, for oracle comparisons."""
    n = int(rng.integers(2, max_vertices + 1))
    edges = []
    for i in range(1, n):                      # spanning tree: connected
        edges.append((i, int(rng.integers(0, i))))
    edges.append((int(rng.integers(0, n)), -1))  # boundary reachable from all
    budget = int(rng.integers(0, max_edges - len(edges) + 1))
    for _ in range(budget):
        u = int(rng.integers(0, n))
        if rng.random() < 0.25:
            edges.append((u, -1))
        else:
            v = int(rng.integers(0, n))
            if v != u:
                edges.append((u, v))
    folded = []
    seen = set()
    for u, v in edges:
        a, b = (u, v) if v < 0 or u < v else (v, u)
        if (a, b) in seen:
            continue                            # parallel edges fold anyway
        seen.add((a, b))
        folded.append((a, b, float(rng.uniform(0.01, 0.45)),
                      int(rng.integers(0, 2))))
    return graph_from_edges(folded, n, seed=int(rng.integers(0, 2 ** 31)))
