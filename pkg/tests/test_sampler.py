import dataclasses

import numpy as np
import pytest

from windec.dem import Mechanism
from windec.graph import decompose_to_graph
from windec.sampler import (SampleBatch, build_sampler, derive_window_labels,
                            read_events, read_grouped_dataset, read_labels,
                            read_predictions, read_window_dataset,
                            read_truncated_labels, sample_events,
                            sample_reference, sample_shot, truncated_labels,
                            window_tensor_block, write_events,
                            write_truncated_labels,
                            write_grouped_dataset, write_labels,
                            write_predictions, write_window_dataset)

from helpers import memory_dem, memory_graph, plan


def test_kernel_matches_python_reference():
    dem = memory_dem(3, 6, 0.01, 'Z')
    graph = memory_graph(3, 6, 0.01, 'Z')
    wplan = plan(6, 2, 2)
    fast = sample_events(dem, graph, wplan, 300, seed=99)
    slow = sample_reference(dem, graph, wplan, 300, seed=99)
    assert np.array_equal(fast.events, slow.events)
    assert np.array_equal(fast.y_global, slow.y_global)
    assert np.array_equal(fast.y_window, slow.y_window)


def test_shots_are_independent_of_blocking():
    dem = memory_dem(3, 4, 0.008, 'Z')
    graph = memory_graph(3, 4, 0.008, 'Z')
    wplan = plan(4, 2, 2)
    arrays = build_sampler(dem, graph)
    whole = sample_events(dem, graph, wplan, 100, seed=5, arrays=arrays)
    first = sample_events(dem, graph, wplan, 60, seed=5, shot0=0, arrays=arrays)
    second = sample_events(dem, graph, wplan, 40, seed=5, shot0=60, arrays=arrays)
    assert np.array_equal(whole.events, np.vstack([first.events, second.events]))
    assert np.array_equal(whole.y_global,
                          np.concatenate([first.y_global, second.y_global]))
    assert np.array_equal(whole.y_window,
                          np.vstack([first.y_window, second.y_window]))


def test_sampling_is_deterministic():
    dem = memory_dem(3, 4, 0.008, 'Z')
    graph = memory_graph(3, 4, 0.008, 'Z')
    wplan = plan(4, 2, 2)
    a = sample_events(dem, graph, wplan, 50, seed=12)
    b = sample_events(dem, graph, wplan, 50, seed=12)
    assert np.array_equal(a.events, b.events)
    c = sample_events(dem, graph, wplan, 50, seed=13)
    assert not np.array_equal(a.events, c.events)


def test_window_labels_xor_to_global():
    dem = memory_dem(3, 9, 0.005, 'Z')
    graph = memory_graph(3, 9, 0.005, 'Z')
    wplan = plan(9, 3, 3)
    batch = sample_events(dem, graph, wplan, 10_000, seed=8)
    assert np.array_equal(batch.y_window.sum(axis=1) % 2, batch.y_global)


def test_single_shot_matches_batch_row():
    dem = memory_dem(3, 6, 0.01, 'Z')
    graph = memory_graph(3, 6, 0.01, 'Z')
    wplan = plan(6, 2, 2)
    batch = sample_events(dem, graph, wplan, 40, seed=77)
    hits = 0
    for si in (0, 3, 17, 39):
        shot = sample_shot(dem, seed=77, shot_index=si)
        assert np.array_equal(shot.events, batch.events[si])
        assert shot.y_global == batch.y_global[si]
        labels = derive_window_labels(shot, wplan, graph)
        assert np.array_equal(labels.y, batch.y_window[si])
        hits += len(shot.error_config)
    assert hits > 0


def test_shot_events_equal_xor_of_fired_mechanisms():
    dem = memory_dem(3, 4, 0.012, 'Z')
    shot = sample_shot(dem, seed=3, shot_index=5)
    want = np.zeros(dem.num_detectors, dtype=np.uint8)
    logical = 0
    for j in shot.error_config:
        for det in dem.mechanisms[j].detectors:
            want[det] ^= 1
        logical ^= dem.mechanisms[j].logical
    assert np.array_equal(shot.events, want)
    assert shot.y_global == logical


def test_empty_model_samples_all_zero():
    dem = dataclasses.replace(memory_dem(3, 2, 0.003, 'Z'), mechanisms=())
    graph = decompose_to_graph(dem, 'Z')
    wplan = plan(2, 1, 1)
    batch = sample_events(dem, graph, wplan, 20, seed=1)
    assert not batch.events.any()
    assert not batch.y_global.any()
    assert not batch.y_window.any()
    shot = sample_shot(dem, seed=1)
    assert shot.error_config == ()
    assert not shot.events.any()


def test_coincident_certain_flips_cancel():
    """Two mechanisms that both always fire and share a detector leave that
    detector dark -- events are the XOR over fired mechanisms."""
    base = memory_dem(3, 2, 0.003, 'Z')
    p_sure = 0.999999
    dem = dataclasses.replace(base, mechanisms=(
        Mechanism(p_sure, (0,), 0), Mechanism(p_sure, (0, 1), 0)))
    shot = sample_shot(dem, seed=4, shot_index=0)
    assert shot.error_config == (0, 1)
    assert shot.events[0] == 0
    assert shot.events[1] == 1


def test_label_marginal_shrinks_with_noise():
    rates = []
    for p in (0.012, 0.006, 0.002):
        dem = memory_dem(3, 6, p, 'Z')
        graph = memory_graph(3, 6, p, 'Z')
        batch = sample_events(dem, graph, plan(6, 2, 2), 30_000, seed=21)
        rates.append(batch.y_window[:, 0].mean())
    assert rates[0] > rates[1] > rates[2] > 0


def test_out_of_range_label_layer_rejected():
    dem = memory_dem(3, 4, 0.01, 'Z')
    graph = memory_graph(3, 4, 0.01, 'Z')
    shot = sample_shot(dem, seed=3, shot_index=5)
    assert shot.error_config            # need at least one fired mechanism
    bad = dataclasses.replace(graph, e_minlayer=graph.e_minlayer + 50)
    with pytest.raises(ValueError):
        derive_window_labels(shot, plan(4, 2, 2), bad)


def test_event_file_round_trip(tmp_path):
    dem = memory_dem(3, 4, 0.008, 'Z')
    graph = memory_graph(3, 4, 0.008, 'Z')
    batch = sample_events(dem, graph, plan(4, 2, 2), 70, seed=6)
    path = tmp_path / "events.wde"
    write_events(str(path), batch, dem)
    events, meta = read_events(str(path))
    assert np.array_equal(events, batch.events)
    assert int(meta['d']) == 3
    assert int(meta['rounds']) == 4
    assert meta['basis'] == 'Z'
    assert float(meta['p']) == 0.008
    assert int(meta['seed']) == 6
    assert int(meta['shot0']) == 0


def test_label_file_round_trip(tmp_path):
    dem = memory_dem(3, 6, 0.01, 'Z')
    graph = memory_graph(3, 6, 0.01, 'Z')
    wplan = plan(6, 2, 2)
    batch = sample_events(dem, graph, wplan, 55, seed=9)
    path = tmp_path / "labels.wdl"
    write_labels(str(path), batch, wplan)
    y_global, y_window, meta = read_labels(str(path))
    assert np.array_equal(y_global, batch.y_global)
    assert np.array_equal(y_window, batch.y_window)
    assert int(meta['m']) == wplan.m
    assert int(meta['core']) == 2


def test_packed_bit_order_is_little_endian(tmp_path):
    """First detector lands in bit 0 of the first payload byte."""
    dem = memory_dem(3, 2, 0.003, 'Z')
    events = np.zeros((1, dem.num_detectors), dtype=np.uint8)
    events[0, 0] = 1
    events[0, 2] = 1
    batch = SampleBatch(events, np.zeros(1, np.uint8),
                        np.zeros((1, 1), np.uint8), seed=0, shot0=0)
    path = tmp_path / "bits.wde"
    write_events(str(path), batch, dem)
    raw = path.read_bytes()
    header_end = raw.index(b"\n", raw.index(b"\n") + 1) + 1
    assert raw[header_end] == 0b00000101


def test_window_dataset_round_trip(tmp_path):
    d, rounds = 3, 9
    dem = memory_dem(d, rounds, 0.005, 'Z')
    graph = memory_graph(d, rounds, 0.005, 'Z')
    wplan = plan(rounds, 3, 3)
    batch = sample_events(dem, graph, wplan, 30, seed=14)
    path = tmp_path / "bulk.wdt"
    write_window_dataset(str(path), dem, wplan, batch.events,
                         batch.y_window, [1])
    tensors, labels, meta = read_window_dataset(str(path))
    assert meta['window_type'] == 'bulk'
    assert tensors.shape == (30, 9, 4, 4)
    assert np.array_equal(labels, batch.y_window[:, 1])
    assert np.array_equal(tensors,
                          window_tensor_block(dem, wplan, 1, batch.events))
    # Record length: depth*(d+1)^2 tensor bits + 1 label bit.
    assert 9 * 16 + 1 == 145


def test_window_dataset_rejects_mixed_types(tmp_path):
    dem = memory_dem(3, 9, 0.005, 'Z')
    graph = memory_graph(3, 9, 0.005, 'Z')
    wplan = plan(9, 3, 3)
    batch = sample_events(dem, graph, wplan, 5, seed=2)
    with pytest.raises(ValueError):
        write_window_dataset(str(tmp_path / "bad.wdt"), dem, wplan,
                             batch.events, batch.y_window, [0, 1])


def test_grouped_dataset_round_trip(tmp_path):
    dem = memory_dem(3, 6, 0.008, 'Z')
    graph = memory_graph(3, 6, 0.008, 'Z')
    wplan = plan(6, 2, 2)
    batch = sample_events(dem, graph, wplan, 25, seed=3)
    path = tmp_path / "grouped.wdg"
    write_grouped_dataset(str(path), dem, wplan, batch.events, batch.y_global)
    tensors, y_global, meta = read_grouped_dataset(str(path))
    assert tensors.shape == (25, wplan.m, 6, 4, 4)
    assert np.array_equal(y_global, batch.y_global)
    for i in range(wplan.m):
        assert np.array_equal(tensors[:, i],
                              window_tensor_block(dem, wplan, i, batch.events))


def test_predictions_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    probs = rng.random((12, 3))
    probs[0, 0] = 0.0
    probs[1, 1] = 1.0
    path = tmp_path / "preds.txt"
    write_predictions(str(path), probs)
    back = read_predictions(str(path))
    assert np.array_equal(back, probs)         # repr round-trips exactly


def test_truncated_labels_last_column_is_full_label():
    # N=7, c=3 -> m=3 with an extended final core, exercising the fold-in
    # of layers beyond i*c+c into the tau == c column.
    dem = memory_dem(3, 7, 0.01, 'Z')
    graph = memory_graph(3, 7, 0.01, 'Z')
    wplan = plan(7, 2, 3)
    arrays = build_sampler(dem, graph)
    batch = sample_events(dem, graph, wplan, 400, seed=11, arrays=arrays)
    ytr = truncated_labels(dem, graph, wplan, 400, seed=11, arrays=arrays)
    assert ytr.shape == (400, wplan.m * wplan.core)
    for i in range(wplan.m):
        full = ytr[:, i * wplan.core + wplan.core - 1]
        assert np.array_equal(full, batch.y_window[:, i])


def test_truncated_labels_match_per_shot_oracle():
    dem = memory_dem(3, 6, 0.02, 'Z')
    graph = memory_graph(3, 6, 0.02, 'Z')
    wplan = plan(6, 2, 2)
    ytr = truncated_labels(dem, graph, wplan, 40, seed=21)
    indptr, comp_edges = graph.mech_edges
    for si in range(40):
        shot = sample_shot(dem, seed=21, shot_index=si)
        want = np.zeros(wplan.m * wplan.core, dtype=np.uint8)
        for j in shot.error_config:
            for e in comp_edges[indptr[j]:indptr[j + 1]]:
                if not graph.elog[e]:
                    continue
                layer = int(graph.e_minlayer[e])
                i = wplan.owner_of_layer(layer)
                t = min(layer - i * wplan.core, wplan.core)
                for tau in range(t, wplan.core + 1):
                    want[i * wplan.core + tau - 1] ^= 1
        assert np.array_equal(ytr[si], want), f"shot {si}"


def test_truncated_labels_blocking_invariance():
    dem = memory_dem(3, 4, 0.01, 'Z')
    graph = memory_graph(3, 4, 0.01, 'Z')
    wplan = plan(4, 2, 2)
    arrays = build_sampler(dem, graph)
    whole = truncated_labels(dem, graph, wplan, 90, seed=8, arrays=arrays)
    head = truncated_labels(dem, graph, wplan, 50, seed=8, arrays=arrays)
    tail = truncated_labels(dem, graph, wplan, 40, seed=8, shot0=50,
                            arrays=arrays)
    assert np.array_equal(whole, np.vstack([head, tail]))


def test_truncated_label_file_round_trip(tmp_path):
    dem = memory_dem(3, 6, 0.015, 'Z')
    graph = memory_graph(3, 6, 0.015, 'Z')
    wplan = plan(6, 2, 2)
    ytr = truncated_labels(dem, graph, wplan, 30, seed=4)
    path = tmp_path / "trunc.wdtl"
    write_truncated_labels(str(path), wplan, ytr, seed=4)
    back, meta = read_truncated_labels(str(path))
    assert np.array_equal(back, ytr)
    assert int(meta['m']) == wplan.m
    assert int(meta['core']) == wplan.core
    assert int(meta['seed']) == 4
    with pytest.raises(ValueError, match="columns"):
        write_truncated_labels(str(path), wplan, ytr[:, :-1], seed=4)
