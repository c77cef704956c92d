import math
from itertools import combinations

import numpy as np
import pytest

from windec.circuit import build_memory_circuit
from windec.dem import (Fault, Mechanism, build_dem, build_memory_dem, dem_from_text,
                        dem_to_text, merge_mechanisms, propagate_fault)
from windec.graph import decompose_to_graph
from windec.sampler import sample_events
from windec.sim import simulate_circuit

from helpers import memory_circuit, memory_dem, memory_graph, plan


def test_identity_fault_silent():
    circ = memory_circuit(3, 2, 0.003, 'Z')
    dets, logical = propagate_fault(circ, Fault(0, ()))
    assert dets == frozenset()
    assert logical == 0


def test_bulk_data_x_before_readout_fires_two_final_detectors():
    """An X on a bulk data qubit after the last stabilizer round flips its two
    adjacent Z checks in the readout comparison layer and nothing else."""
    d, rounds = 3, 2
    circ = memory_circuit(d, rounds, 0.003, 'Z')
    final_m = max(i for i, op in enumerate(circ.ops) if op.kind == 'M')
    bulk = circ.layout.qubit_index[(1, 1)]
    dets, logical = propagate_fault(circ, Fault(final_m - 1, ((bulk, 'X'),)))
    assert len(dets) == 2
    for i in dets:
        det = circ.detectors[i]
        assert det.basis == 'Z'
        assert det.layer == rounds + 1
    assert logical == 0          # (1, 1) is off the logical row


def test_ancilla_flip_round_two_of_four():
    d, rounds = 3, 4
    circ = memory_circuit(d, rounds, 0.003, 'Z')
    det2 = circ.detectors[circ.detector_id('Z', 2, 0)]
    det3 = circ.detectors[circ.detector_id('Z', 3, 0)]
    shared = set(det2.meas) & set(det3.meas)
    assert len(shared) == 1      # the round-2 ancilla outcome they compare
    dets, logical = propagate_fault(circ, Fault(0, None, shared.pop()))
    assert dets == {circ.detector_id('Z', 2, 0), circ.detector_id('Z', 3, 0)}
    assert logical == 0


def test_noiseless_circuit_gives_empty_model():
    dem = build_memory_dem(3, 2, 0.0, 'Z')
    assert dem.mechanisms == ()


def test_single_round_mechanisms_touch_at_most_four_detectors():
    dem = build_memory_dem(3, 1, 0.003, 'Z')
    assert all(len(m.detectors) <= 4 for m in dem.mechanisms)


@pytest.mark.parametrize('rounds', [1, 3])
def test_model_invariants(rounds):
    dem = memory_dem(3, rounds, 0.003, 'Z')
    sigs = {(m.detectors, m.logical) for m in dem.mechanisms}
    assert len(sigs) == len(dem.mechanisms)
    for m in dem.mechanisms:
        assert all(0 <= i < dem.num_detectors for i in m.detectors)
        assert 0 < m.prob < 1
        assert m.detectors or m.logical  # no fully invisible mechanisms kept


def test_merge_law():
    fs = frozenset({3})
    merged = merge_mechanisms([(0.1, fs, 0), (0.1, fs, 0)])
    assert len(merged) == 1
    assert merged[0] == Mechanism(pytest.approx(0.18), (3,), 0)


def test_template_construction_matches_direct_enumeration():
    d, rounds, p = 3, 10, 0.004
    tiled = build_memory_dem(d, rounds, p, 'Z')
    direct = build_dem(build_memory_circuit(d, rounds, p, 'Z'))
    assert tiled.detectors == direct.detectors
    assert len(tiled.mechanisms) == len(direct.mechanisms)
    for a, b in zip(tiled.mechanisms, direct.mechanisms):
        assert a.detectors == b.detectors
        assert a.logical == b.logical
        assert math.isclose(a.prob, b.prob, rel_tol=1e-9)


@pytest.mark.parametrize('rounds', [3, 12])
def test_serialized_model_is_reproducible(rounds):
    a = dem_to_text(build_memory_dem(3, rounds, 0.003, 'Z'))
    b = dem_to_text(build_memory_dem(3, rounds, 0.003, 'Z'))
    assert a == b


def test_text_round_trip():
    dem = memory_dem(3, 3, 0.003, 'X')
    text = dem_to_text(dem)
    back = dem_from_text(text)
    assert dem_to_text(back) == text
    assert back.distance == dem.distance
    assert back.rounds == dem.rounds
    assert back.basis == dem.basis
    assert back.p == dem.p
    assert back.detectors == dem.detectors
    assert back.mechanisms == dem.mechanisms


def test_detector_statistics_match_direct_monte_carlo():
    """Per-detector event probability from model-based sampling agrees with an
    independent Pauli-frame simulation of the circuit within 3 sigma."""
    d, rounds, p, shots = 3, 3, 0.005, 100_000
    circ = memory_circuit(d, rounds, p, 'Z')
    mc_events, _ = simulate_circuit(circ, shots, seed=5, noisy=True)

    dem = memory_dem(d, rounds, p, 'Z')
    graph = memory_graph(d, rounds, p, 'Z')
    batch = sample_events(dem, graph, plan(rounds, 1, 1), shots, seed=17)

    key_mc = {(det.basis, det.layer, det.pos): i
              for i, det in enumerate(circ.detectors)}
    for j, (basis, layer, pos, _) in enumerate(dem.detectors):
        a = mc_events[:, key_mc[(basis, layer, pos)]].mean()
        b = batch.events[:, j].mean()
        pool = (a + b) / 2
        sigma = math.sqrt(max(pool * (1 - pool), 1e-12) * 2 / shots)
        assert abs(a - b) <= 3 * sigma, (basis, layer, pos, a, b)


def _edge_syndrome(graph, edges):
    odd = set()
    for e in edges:
        for v in (int(graph.eu[e]), int(graph.ev[e])):
            if v >= 0:
                odd.symmetric_difference_update({v})
    return odd


def test_minimum_logical_set_has_three_edges():
    """Brute force over the d=3 graph: no 1- or 2-edge set is simultaneously
    syndrome-free and logical-flipping, while some 3-edge set is."""
    graph = memory_graph(3, 2, 0.003, 'Z')
    edges = range(graph.n_edges)

    for size in (1, 2):
        for combo in combinations(edges, size):
            if _edge_syndrome(graph, combo):
                continue
            assert sum(int(graph.elog[e]) for e in combo) % 2 == 0

    # Tightness: a weight-3 logical set exists among the readout-layer edges.
    final_layer = graph.layer_hi
    candidates = [e for e in edges
                  if graph.v_layer[graph.eu[e]] == final_layer
                  and (graph.ev[e] < 0
                       or graph.v_layer[graph.ev[e]] == final_layer)]
    assert len(candidates) < 60
    found = any(
        not _edge_syndrome(graph, combo)
        and sum(int(graph.elog[e]) for e in combo) % 2 == 1
        for combo in combinations(candidates, 3))
    assert found
