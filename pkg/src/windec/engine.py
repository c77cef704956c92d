"""Merge-free window-parallel decoding of a sampled memory experiment.

Each window decodes its buffered span of the shared decoding graph
independently; only edges whose earliest layer falls inside the window's
core are committed.  The global logical estimate is the XOR of the windows'
committed-logical parities, so windows never exchange corrections and any
number of them can run at once.  Seam audits quantify how often adjacent
windows disagree about the two layers straddling a commit boundary.
"""

from __future__ import annotations

import multiprocessing as mp
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dem import DetectorModel
from .graph import DecodingGraph
from .mwpm import MatchContext, decode, decode_parity_batch
from .windows import WindowPlan, core_edge_mask, window_subgraph


def basis_event_columns(dem: DetectorModel, basis: str) -> np.ndarray:
    """Global detector ids ordered by the basis graph's vertex ids."""
    order = {}
    for did, (b, layer, pos, _plaq) in enumerate(dem.detectors):
        if b == basis:
            order[(layer, pos)] = did
    return np.array([order[k] for k in sorted(order)], dtype=np.int64)


def window_contexts(graph: DecodingGraph, plan: WindowPlan) -> list:
    """One decode context per window, parity-counting committed logical edges."""
    ctxs = []
    for i in range(plan.m):
        sub = window_subgraph(graph, plan, i)
        sel = (core_edge_mask(sub, plan, i) & sub.elog).astype(np.uint8)
        ctxs.append(MatchContext(sub, sel))
    return ctxs


def _window_span_vids(graph: DecodingGraph, plan: WindowPlan, i: int):
    lo, hi = plan.span(i)
    lo = max(lo, graph.layer_lo)
    hi = min(hi, graph.layer_hi)
    s = graph.stabs_per_layer
    return (lo - graph.layer_lo) * s, (hi - lo + 1) * s


@dataclass
class ParallelResult:
    plan: WindowPlan
    window_parity: np.ndarray   # (shots, m) committed-logical bit per window
    parity: np.ndarray          # (shots,) XOR across windows

    def error_count(self, truth: np.ndarray) -> int:
        return int(np.count_nonzero(self.parity ^ truth))


_POOL_STATE: dict = {}


def _decode_window_task(i: int):
    ctx = _POOL_STATE['ctxs'][i]
    vid0, nloc = _POOL_STATE['spans'][i]
    return i, decode_parity_batch(ctx, _POOL_STATE['events'], vid0, nloc)


def decode_parallel(graph: DecodingGraph, plan: WindowPlan, events: np.ndarray,
                    workers: int = 1, ctxs: list = None,
                    window_probs: np.ndarray = None) -> ParallelResult:
    """Decode every window over a block of shots and XOR their parities.

    events holds one row per shot, columns indexed by the graph's real
    vertex ids (use :func:`basis_event_columns` to slice a raw detector
    record down to one basis).  Precomputed ``ctxs`` may be passed when
    decoding many blocks against the same plan.

    ``window_probs`` swaps the matching inner decoder for externally
    produced per-window flip probabilities, shape (shots, m): each bit is
    the probability thresholded at one half, and the combination stays
    the same XOR.  This is how prediction files from a learned window
    decoder enter the pipeline.

    With ``workers > 1`` the windows are distributed over forked worker
    processes.  Results are bitwise identical for any worker count: each
    window's decode is deterministic and the combination is an XOR.
    """
    if window_probs is not None:
        probs = np.asarray(window_probs, dtype=np.float64)
        if probs.shape != (events.shape[0], plan.m):
            raise ValueError(
                f"need one prediction per shot and window, "
                f"expected {(events.shape[0], plan.m)}, got {probs.shape}")
        if not np.isfinite(probs).all():
            raise ValueError("predictions contain non-finite values")
        wp = (probs > 0.5).astype(np.uint8)
        return ParallelResult(plan, wp, np.bitwise_xor.reduce(wp, axis=1))
    if ctxs is None:
        ctxs = window_contexts(graph, plan)
    spans = [_window_span_vids(graph, plan, i) for i in range(plan.m)]
    shots = events.shape[0]
    wp = np.empty((shots, plan.m), np.uint8)
    if workers <= 1 or plan.m == 1:
        for i, ctx in enumerate(ctxs):
            vid0, nloc = spans[i]
            wp[:, i] = decode_parity_batch(ctx, events, vid0, nloc)
    else:
        _POOL_STATE.update(ctxs=ctxs, spans=spans, events=events)
        try:
            with mp.get_context('fork').Pool(min(workers, plan.m)) as pool:
                for i, bits in pool.imap_unordered(_decode_window_task,
                                                   range(plan.m)):
                    wp[:, i] = bits
        finally:
            _POOL_STATE.clear()
    parity = np.bitwise_xor.reduce(wp, axis=1)
    return ParallelResult(plan, wp, parity)


def decode_global(graph: DecodingGraph, events: np.ndarray,
                  ctx: MatchContext = None) -> np.ndarray:
    """Whole-memory reference decode; returns the logical parity per shot."""
    if ctx is None:
        ctx = MatchContext(graph)
    return decode_parity_batch(ctx, events)


# ---------------------------------------------------------------------------
# Seam audits.

def _pairs_block(ctx: MatchContext, events: np.ndarray, vid0: int, nloc: int):
    shots = events.shape[0]
    cap = max(256, 4 * shots)
    while True:
        pu = np.empty(cap, np.int32)
        pv = np.empty(cap, np.int32)
        off = np.zeros(shots + 1, np.int64)
        n = K.decode_pairs_block(events, vid0, nloc, ctx.D, ctx.bd, pu, pv, off)
        if n >= 0:
            return pu[:n], pv[:n], off
        cap *= 2


def _committed_block(ctx: MatchContext, commit: np.ndarray, events: np.ndarray,
                     vid0: int, nloc: int):
    """Committed correction per shot, as parent edge ids (CSR ids, off)."""
    pu, pv, off = _pairs_block(ctx, events, vid0, nloc)
    cap = max(256, 8 * pu.size + 64)
    while True:
        ids = np.empty(cap, np.int64)
        ioff = np.zeros(off.size, np.int64)
        n = K.expand_paths_block(pu, pv, off, ctx.pred, ctx.btarget,
                                 ctx.super_id, ctx.adj_ptr, ctx.adj_nb,
                                 ctx.adj_eid, ctx.sb_eid, ids, ioff)
        if n >= 0:
            break
        cap *= 2
    out_ids = np.empty(max(n, 1), np.int64)
    out_off = np.zeros(off.size, np.int64)
    K.commit_filter(ids, ioff, commit, ctx.graph.parent_edge, out_ids, out_off)
    return out_ids, out_off


def seam_scan(graph: DecodingGraph, plan: WindowPlan, events: np.ndarray,
              ctxs: list = None, block: int = 2048) -> np.ndarray:
    """Audit every seam for every shot.

    For each pair of adjacent windows, the committed corrections are stitched
    and their residual against the recorded events is counted over the two
    layers around the seam.  Zero means the windows told a mutually
    consistent story there.  Returns a (shots, m - 1) count matrix.
    """
    m = plan.m
    s = graph.stabs_per_layer
    shots = events.shape[0]
    counts = np.zeros((shots, max(m - 1, 0)), np.int64)
    if m == 1:
        return counts
    if ctxs is None:
        ctxs = window_contexts(graph, plan)
    commits = [core_edge_mask(ctxs[i].graph, plan, i) for i in range(m)]
    spans = [_window_span_vids(graph, plan, i) for i in range(m)]
    for lo in range(0, shots, block):
        blk = events[lo:lo + block]
        committed = []
        for i in range(m):
            vid0, nloc = spans[i]
            committed.append(_committed_block(ctxs[i], commits[i], blk,
                                              vid0, nloc))
        out = np.empty(blk.shape[0], np.int64)
        for i in range(m - 1):
            seam_vid0 = ((i + 1) * plan.core - graph.layer_lo) * s
            a_ids, a_off = committed[i]
            b_ids, b_off = committed[i + 1]
            K.audit_block(a_ids, a_off, b_ids, b_off, graph.eu, graph.ev,
                          blk, seam_vid0, 2 * s, out)
            counts[lo:lo + blk.shape[0], i] = out
    return counts


def seam_residual(graph: DecodingGraph, plan: WindowPlan, i: int,
                  left_edges, right_edges, events_row: np.ndarray):
    """Residual defects when two committed corrections meet at seam i.

    ``left_edges`` and ``right_edges`` are the committed corrections of
    windows i and i+1 as parent-graph edge ids.  Their stitched boundary
    is compared against the recorded events on the two layers straddling
    the seam; a nonzero entry means the windows cut their chains there
    inconsistently.  Returns ``(vector, count)`` with the vector ordered
    by (layer, position).
    """
    if not 0 <= i < plan.m - 1:
        raise ValueError(
            f"windows {i} and {i + 1} do not share a seam (m={plan.m})")
    s = graph.stabs_per_layer
    vref = ((i + 1) * plan.core - graph.layer_lo) * s
    toggles = np.zeros(2 * s, np.uint8)
    for edges in (left_edges, right_edges):
        for pe in edges:
            for g in (int(graph.eu[pe]), int(graph.ev[pe])):
                r = g - vref
                if 0 <= r < 2 * s:
                    toggles[r] ^= 1
    vec = toggles ^ events_row[vref:vref + 2 * s].astype(np.uint8)
    return vec, int(vec.sum())


def committed_correction(graph: DecodingGraph, plan: WindowPlan, i: int,
                         events_row: np.ndarray, ctx: MatchContext = None):
    """Window i's committed correction for one shot, as parent edge ids."""
    if ctx is None:
        ctx = MatchContext(window_subgraph(graph, plan, i))
    sub = ctx.graph
    commit = core_edge_mask(sub, plan, i)
    vid0, nloc = _window_span_vids(graph, plan, i)
    ev = [t for t in range(nloc) if events_row[vid0 + t]]
    corr = decode(ctx, ev)
    return [int(sub.parent_edge[e]) for e in corr.edges if commit[e]]


def seam_audit(graph: DecodingGraph, plan: WindowPlan, events_row: np.ndarray,
               i: int, ctxs: list = None):
    """Residual defect vector across seam i for a single shot.

    Plain reference path: decodes windows i and i+1 with full expansion,
    commits each side, and hands the pair to :func:`seam_residual`.
    """
    if not 0 <= i < plan.m - 1:
        raise ValueError("seam index out of range")
    sides = []
    for w in (i, i + 1):
        ctx = None if ctxs is None else ctxs[w]
        sides.append(committed_correction(graph, plan, w, events_row, ctx))
    return seam_residual(graph, plan, i, sides[0], sides[1], events_row)


# ---------------------------------------------------------------------------
# Throughput model.

def benchmark_throughput(d: int, rounds_list, p: float, buffer: int, core: int,
                         shots: int = 512, seed: int = 7, reps: int = 3):
    """Time window decoding at several memory lengths.

    Windows are timed one at a time so the numbers are honest on a single
    core; with one worker pinned to each window the parallel wall time is
    the slowest window's time, reported here as the makespan.  Setup work
    (graph build, distance tables) is excluded: it is done once per
    configuration and amortizes away in a long-running decode.

    Returns one row per N: ``{rounds, m, window_seconds, makespan_seconds,
    total_seconds, makespan_per_shot}``.
    """
    from .dem import build_memory_dem
    from .graph import decompose_to_graph
    from .sampler import sample_events
    from .windows import plan_windows

    rows = []
    for rounds in rounds_list:
        dem = build_memory_dem(d, rounds, p)
        graph = decompose_to_graph(dem, dem.basis)
        plan = plan_windows(rounds, buffer, core)
        ctxs = window_contexts(graph, plan)
        cols = basis_event_columns(dem, dem.basis)
        ev = sample_events(dem, graph, plan, shots, seed).events[:, cols]
        ev = np.ascontiguousarray(ev)
        times = []
        for i, ctx in enumerate(ctxs):
            vid0, nloc = _window_span_vids(graph, plan, i)
            decode_parity_batch(ctx, ev[:4], vid0, nloc)   # warm the jit
            best = min(_timed(ctx, ev, vid0, nloc) for _ in range(reps))
            times.append(best)
        makespan = max(times)
        rows.append({
            'rounds': rounds,
            'm': plan.m,
            'window_seconds': times,
            'makespan_seconds': makespan,
            'total_seconds': sum(times),
            'makespan_per_shot': makespan / shots,
        })
    return rows


def _timed(ctx, events, vid0, nloc):
    t0 = time.perf_counter()
    decode_parity_batch(ctx, events, vid0, nloc)
    return time.perf_counter() - t0
