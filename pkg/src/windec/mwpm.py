"""Minimum-weight perfect matching on decoding graphs, via distance reduction.

The reduction: run Dijkstra from every real vertex over a directed view of
the graph where time-virtual vertices and a single space-boundary supernode
are absorbing (edges lead in, never out), so no chain tunnels through the
outside region.  Each shot's events then form a complete "disposal" problem
on pairwise distances plus per-event boundary costs, pruned by the
optimum-preserving rule D(i,j) >= bd(i) + bd(j) (routing both events to
their boundaries is never worse), decomposed into connected clusters and
solved exactly per cluster.

Weights carry a deterministic identity-keyed perturbation (see graph.py), so
shortest paths and optimal matchings are unique and reproducible; every
canonical path is recoverable from the predecessor tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import _kernels as K
from .graph import DecodingGraph


@dataclass
class Correction:
    """One shot's decoded correction on one graph."""
    pairs: list            # (event vid, partner vid or -1 boundary)
    edges: np.ndarray      # edge ids of the expanded canonical paths
    cost: float            # optimal disposal cost (perturbed weights)
    parity: int            # parity of selected edges along the correction


class MatchContext:
    """Precomputed distance, predecessor, and parity tables for one graph.

    Parameters
    ----------
    graph : DecodingGraph
    sel : uint8 array per edge, optional
        Which edges count toward the decoded parity (default: the logical
        membership mask, i.e. decode the full graph's observable).
    """

    def __init__(self, graph: DecodingGraph, sel: np.ndarray = None):
        self.graph = graph
        self.sel = graph.elog.copy() if sel is None else np.asarray(sel, np.uint8)
        n, nv = graph.n_real, graph.n_virt
        ntot = n + nv
        self.super_id = ntot
        nn = ntot + 1

        # Reduce parallel edges to the lightest per (tail, head).
        best = {}
        for e in range(graph.n_edges):
            u, v = int(graph.eu[e]), int(graph.ev[e])
            head = self.super_id if v < 0 else v
            w = graph.ewp[e]
            cur = best.get((u, head))
            if cur is None or w < cur[0]:
                best[(u, head)] = (w, e)
            if 0 <= head < n:                     # real-real: both directions
                cur = best.get((head, u))
                if cur is None or w < cur[0]:
                    best[(head, u)] = (w, e)

        rows = np.array([k[0] for k in best], dtype=np.int64)
        cols = np.array([k[1] for k in best], dtype=np.int64)
        data = np.array([v[0] for v in best.values()], dtype=np.float64)
        eids = np.array([v[1] for v in best.values()], dtype=np.int64)
        csg = csr_matrix((data, (rows, cols)), shape=(nn, nn))
        dist, pred = dijkstra(csg, directed=True, indices=np.arange(n),
                              return_predecessors=True)
        self.dist = dist
        self.pred = pred.astype(np.int32)
        D = dist[:, :n]
        self.D = np.minimum(D, D.T)
        absorb = dist[:, n:]
        self.bd = absorb.min(axis=1)
        self.btarget = (n + absorb.argmin(axis=1)).astype(np.int32)
        assert np.all(np.isfinite(self.bd)), "some vertex cannot reach a boundary"

        # Neighbor lookup for real rows, sorted (neighbor, weight): the first
        # hit per neighbor is the edge Dijkstra used.
        order = np.lexsort((data, cols, rows))
        mask = rows[order] < n
        ro, co, eo = rows[order][mask], cols[order][mask], eids[order][mask]
        inner = co != self.super_id
        ro, co, eo = ro[inner], co[inner], eo[inner]
        self.adj_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.adj_ptr, ro + 1, 1)
        np.cumsum(self.adj_ptr, out=self.adj_ptr)
        self.adj_nb = co.astype(np.int32)
        self.adj_eid = eo
        self.adj_sel = self.sel[eo]

        self.sb_eid = np.full(n, -1, dtype=np.int64)
        self.bsel = np.zeros(n, dtype=np.uint8)
        for (u, head), (w, e) in best.items():
            if head == self.super_id:
                self.sb_eid[u] = e
                self.bsel[u] = self.sel[e]

        self.par = np.zeros((n, n), dtype=np.uint8)
        self.bpar = np.zeros(n, dtype=np.uint8)
        K.build_parity_tables(n, self.super_id, self.dist, self.pred,
                              self.adj_ptr, self.adj_nb, self.adj_sel,
                              self.btarget, self.bsel, self.par, self.bpar)


def shortest_paths(graph: DecodingGraph, sel: np.ndarray = None) -> MatchContext:
    """All-pairs shortest paths plus boundary distances and parity tables."""
    return MatchContext(graph, sel)


def decode(ctx_or_graph, event_vids) -> Correction:
    """Decode one shot given its event vertex ids.

    Returns the matched pairs, the expanded canonical-path edge ids, the
    optimal cost under perturbed weights, and the selected-edge parity.
    """
    ctx = ctx_or_graph if isinstance(ctx_or_graph, MatchContext) \
        else MatchContext(ctx_or_graph)
    ev = np.asarray(sorted(event_vids), dtype=np.int32)
    if ev.size == 0:
        return Correction([], np.empty(0, np.int64), 0.0, 0)
    if ev[0] < 0 or ev[-1] >= ctx.graph.n_real:
        raise ValueError("event on unknown vertex")
    partner = np.empty(ev.size, np.int32)
    cost = K._match_events(ev, ctx.D, ctx.bd, partner)

    pu, pv, off = [], [], np.zeros(2, np.int64)
    for a in range(ev.size):
        q = partner[a]
        if q < 0:
            pu.append(ev[a]); pv.append(-1)
        elif q > a:
            pu.append(ev[a]); pv.append(ev[q])
    off[1] = len(pu)
    ntot = ctx.graph.n_real + ctx.graph.n_virt
    cap = ev.size * (ntot + 1) + 16
    out_ids = np.empty(cap, np.int64)
    out_off = np.zeros(2, np.int64)
    nfill = K.expand_paths_block(np.array(pu, np.int32), np.array(pv, np.int32),
                                 off, ctx.pred, ctx.btarget, ctx.super_id,
                                 ctx.adj_ptr, ctx.adj_nb, ctx.adj_eid,
                                 ctx.sb_eid, out_ids, out_off)
    edges = np.sort(out_ids[:nfill])
    parity = int(ctx.sel[edges].sum() % 2)
    return Correction([(int(u), int(v)) for u, v in zip(pu, pv)],
                      edges, float(cost), parity)


def decode_parity_batch(ctx: MatchContext, events: np.ndarray,
                        vid0: int = 0, nloc: int = None) -> np.ndarray:
    """Per-shot decoded parity for a block of shots.

    events is the (shots, n_real) bit matrix of the parent indexing; the
    window occupies columns [vid0, vid0 + nloc).
    """
    nloc = ctx.graph.n_real if nloc is None else nloc
    out = np.empty(events.shape[0], dtype=np.uint8)
    K.decode_parity_block(events, vid0, nloc, ctx.D, ctx.bd,
                          ctx.par, ctx.bpar, out)
    return out
