import math

import numpy as np
import pytest

from windec.engine import (ParallelResult, basis_event_columns,
                           benchmark_throughput, committed_correction,
                           decode_global, decode_parallel, seam_audit,
                           seam_residual, seam_scan, window_contexts)
from windec.mwpm import MatchContext
from windec.sampler import sample_events
from windec.windows import core_edge_mask, window_subgraph

from helpers import memory_dem, memory_graph, plan


def _events(d, rounds, p, wplan, shots, seed):
    dem = memory_dem(d, rounds, p, 'Z')
    graph = memory_graph(d, rounds, p, 'Z')
    batch = sample_events(dem, graph, wplan, shots, seed)
    cols = basis_event_columns(dem, 'Z')
    ev = np.ascontiguousarray(batch.events[:, cols])
    return graph, batch, ev


def test_zero_events_decode_to_zero():
    graph = memory_graph(3, 6, 0.003, 'Z')
    wplan = plan(6, 2, 2)
    ev = np.zeros((5, graph.n_real), dtype=np.uint8)
    res = decode_parallel(graph, wplan, ev)
    assert not res.window_parity.any()
    assert not res.parity.any()
    assert not decode_global(graph, ev).any()


def test_basis_event_columns_order():
    dem = memory_dem(3, 3, 0.003, 'Z')
    for basis, lo in (('Z', 1), ('X', 2)):
        cols = basis_event_columns(dem, basis)
        s = 4
        for vid, did in enumerate(cols):
            b, layer, pos, _ = dem.detectors[did]
            assert b == basis
            assert layer == lo + vid // s
            assert pos == vid % s


def test_result_is_identical_for_any_worker_count():
    wplan = plan(9, 3, 3)
    graph, _batch, ev = _events(3, 9, 0.004, wplan, 400, seed=11)
    ctxs = window_contexts(graph, wplan)
    base = decode_parallel(graph, wplan, ev, workers=1, ctxs=ctxs)
    for workers in (2, 8):
        other = decode_parallel(graph, wplan, ev, workers=workers, ctxs=ctxs)
        assert np.array_equal(base.window_parity, other.window_parity)
        assert np.array_equal(base.parity, other.parity)


def test_parallel_tracks_global_at_full_buffer():
    """b=d window decoding loses almost nothing against the global decode:
    same-shot agreement >= 98% and the failure rates sit within 2 sigma."""
    shots = 20_000
    wplan = plan(9, 3, 3)
    graph, batch, ev = _events(3, 9, 0.003, wplan, shots, seed=29)
    res = decode_parallel(graph, wplan, ev)
    gl = decode_global(graph, ev)
    agree = float(np.mean(res.parity == gl))
    assert agree >= 0.98
    fail_par = int(np.count_nonzero(res.parity ^ batch.y_global))
    fail_glo = int(np.count_nonzero(gl ^ batch.y_global))
    p_par, p_glo = fail_par / shots, fail_glo / shots
    sigma = math.sqrt((p_par * (1 - p_par) + p_glo * (1 - p_glo)) / shots)
    assert abs(p_par - p_glo) <= 2 * sigma


def test_true_window_labels_reproduce_global_truth():
    """Feeding the ground-truth window bits through the external-prediction
    path recovers the global label on every shot: the XOR combination is
    sound whenever each window is right."""
    wplan = plan(9, 3, 3)
    graph, batch, ev = _events(3, 9, 0.005, wplan, 3000, seed=17)
    res = decode_parallel(graph, wplan, ev,
                          window_probs=batch.y_window.astype(np.float64))
    assert np.array_equal(res.window_parity, batch.y_window)
    assert np.array_equal(res.parity, batch.y_global)


def test_prediction_matrix_validation():
    wplan = plan(6, 2, 2)
    graph, _batch, ev = _events(3, 6, 0.003, wplan, 10, seed=1)
    with pytest.raises(ValueError):
        decode_parallel(graph, wplan, ev, window_probs=np.zeros((10, 2)))
    bad = np.zeros((10, wplan.m))
    bad[3, 1] = np.nan
    with pytest.raises(ValueError):
        decode_parallel(graph, wplan, ev, window_probs=bad)


def test_seam_indices_validated():
    graph = memory_graph(3, 6, 0.003, 'Z')
    wplan = plan(6, 2, 2)
    row = np.zeros(graph.n_real, dtype=np.uint8)
    with pytest.raises(ValueError):
        seam_residual(graph, wplan, wplan.m - 1, [], [], row)
    with pytest.raises(ValueError):
        seam_audit(graph, wplan, row, wplan.m - 1)
    with pytest.raises(ValueError):
        seam_audit(graph, wplan, row, -1)


def test_empty_shot_has_clean_seams():
    graph = memory_graph(3, 9, 0.003, 'Z')
    wplan = plan(9, 3, 3)
    row = np.zeros(graph.n_real, dtype=np.uint8)
    for i in range(wplan.m - 1):
        vec, count = seam_audit(graph, wplan, row, i)
        assert count == 0
        assert not vec.any()


def test_inconsistent_stitch_is_flagged():
    """A correction edge toggling a seam detector with no recorded event is
    exactly the inconsistency the audit measures."""
    graph = memory_graph(3, 9, 0.003, 'Z')
    wplan = plan(9, 3, 3)
    s = graph.stabs_per_layer
    seam_lo, _ = wplan.seam_layers(0)
    vref = (seam_lo - graph.layer_lo) * s
    e = next(k for k in range(graph.n_edges)
             if int(graph.ev[k]) >= 0
             and int(graph.v_layer[graph.eu[k]]) == seam_lo
             and int(graph.v_layer[graph.ev[k]]) == seam_lo + 1)
    row = np.zeros(graph.n_real, dtype=np.uint8)
    vec, count = seam_residual(graph, wplan, 0, [e], [], row)
    assert count == 2          # both endpoints toggled, no events to cancel
    # The same stitch is consistent when the events are actually there.
    row[int(graph.eu[e])] = 1
    row[int(graph.ev[e])] = 1
    vec, count = seam_residual(graph, wplan, 0, [e], [], row)
    assert count == 0


def test_reference_audit_matches_block_scan():
    wplan = plan(9, 1, 3)          # thin buffers: disagreements do occur
    graph, _batch, ev = _events(3, 9, 0.01, wplan, 300, seed=41)
    counts = seam_scan(graph, wplan, ev)
    assert counts.shape == (300, wplan.m - 1)
    ctxs = window_contexts(graph, wplan)
    for si in range(0, 300, 7):
        for i in range(wplan.m - 1):
            _vec, count = seam_audit(graph, wplan, ev[si], i, ctxs)
            assert count == counts[si, i]
    assert counts.sum() > 0        # nonempty audits exist at b=1


def test_seam_scan_invariant_under_blocking():
    wplan = plan(9, 1, 3)
    graph, _batch, ev = _events(3, 9, 0.01, wplan, 150, seed=43)
    a = seam_scan(graph, wplan, ev, block=2048)
    b = seam_scan(graph, wplan, ev, block=7)
    assert np.array_equal(a, b)


def test_single_window_has_no_seams():
    wplan = plan(3, 3, 3)
    graph, _batch, ev = _events(3, 3, 0.005, wplan, 50, seed=3)
    counts = seam_scan(graph, wplan, ev)
    assert counts.shape == (50, 0)


def test_committed_correction_stays_in_core():
    wplan = plan(9, 2, 3)
    graph, _batch, ev = _events(3, 9, 0.008, wplan, 40, seed=19)
    for i in range(wplan.m):
        sub = window_subgraph(graph, wplan, i)
        ctx = MatchContext(sub)
        lo, hi = wplan.core_span(i)
        for si in range(40):
            for pe in committed_correction(graph, wplan, i, ev[si], ctx):
                owner = min((int(graph.e_minlayer[pe]) - 1) // wplan.core,
                            wplan.m - 1)
                assert owner == i
                assert lo <= int(graph.e_minlayer[pe]) <= hi


def test_seam_rate_drops_with_buffer_depth():
    rates = []
    for b in (1, 3):
        wplan = plan(9, b, 3)
        graph, _batch, ev = _events(3, 9, 0.006, wplan, 4000, seed=53)
        counts = seam_scan(graph, wplan, ev)
        rates.append(float(np.mean(counts.sum(axis=1) > 0)))
    assert rates[0] > rates[1]


def test_throughput_rows_are_consistent():
    rows = benchmark_throughput(3, [2, 4], 0.003, 1, 1, shots=64, reps=1)
    assert [r['rounds'] for r in rows] == [2, 4]
    for r in rows:
        assert r['m'] == r['rounds']               # c=1: one window per round
        assert len(r['window_seconds']) == r['m']
        assert r['makespan_seconds'] == max(r['window_seconds'])
        assert r['total_seconds'] == pytest.approx(sum(r['window_seconds']))
        assert r['makespan_per_shot'] == pytest.approx(
            r['makespan_seconds'] / 64)
        assert all(t > 0 for t in r['window_seconds'])


def test_single_window_throughput_formula():
    rows = benchmark_throughput(3, [4], 0.003, 4, 4, shots=64, reps=1)
    (row,) = rows
    assert row['m'] == 1
    assert row['makespan_seconds'] == row['total_seconds']
    # With one window the whole-memory decode time per round is the single
    # window's time divided by the number of rounds.
    per_round = row['makespan_per_shot'] / row['rounds']
    assert per_round == pytest.approx(
        row['makespan_seconds'] / 64 / 4)
