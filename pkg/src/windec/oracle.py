"""Exhaustive decoding oracle, independent of the matching pipeline.

Dynamic program over edge subsets tracked by their defect pattern on real
vertices: scanning edges one by one, a state maps each reachable pattern to
the cheapest subset producing it (and the subset itself, for set equality
checks).  Time-virtual vertices and the space boundary absorb freely, same
as the matching semantics.  Cost uses the same perturbed weights, so the
minimizing edge set is unique and must equal the decoder's expansion.
"""

from __future__ import annotations

import numpy as np

from .graph import DecodingGraph

MAX_REAL = 22


def brute_force_decode(graph: DecodingGraph, event_vids, sel: np.ndarray = None):
    """Minimum-weight edge set whose real-vertex boundary equals the events.

    Returns (cost, edge id tuple, selected-edge parity).
    """
    n = graph.n_real
    if n > MAX_REAL:
        raise ValueError(f"{n} real vertices is past the exhaustive limit")
    sel = graph.elog if sel is None else sel
    target = 0
    for v in event_vids:
        assert 0 <= v < n
        target ^= 1 << int(v)

    states = {0: (0.0, ())}
    for e in range(graph.n_edges):
        u, v = int(graph.eu[e]), int(graph.ev[e])
        pat = (1 << u) if u < n else 0
        if 0 <= v < n:
            pat ^= 1 << v
        w = float(graph.ewp[e])
        updates = {}
        for p, (c, subset) in states.items():
            q = p ^ pat
            cand = (c + w, subset + (e,))
            cur = states.get(q)
            best = updates.get(q, cur)
            if best is None or cand[0] < best[0]:
                updates[q] = cand
        for q, val in updates.items():
            cur = states.get(q)
            if cur is None or val[0] < cur[0]:
                states[q] = val
    if target not in states:
        raise ValueError("events not realizable by any edge subset")
    cost, subset = states[target]
    parity = int(sum(int(sel[e]) for e in subset) % 2)
    return cost, tuple(sorted(subset)), parity
