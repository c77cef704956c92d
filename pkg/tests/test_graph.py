import dataclasses
import math

import numpy as np
import pytest

from windec.dem import PROB_FLOOR, Mechanism
from windec.graph import DecompositionError, decompose_to_graph, graph_to_csv

from helpers import memory_dem, memory_graph


def with_mechanisms(*mechanisms, rounds=2):
    """A d=3 memory model with its mechanism list replaced by hand."""
    base = memory_dem(3, rounds, 0.003, 'Z')
    return dataclasses.replace(base, mechanisms=tuple(mechanisms))


def test_single_detector_mechanism_is_boundary_edge():
    dem = with_mechanisms(Mechanism(0.01, (0,), 0))
    graph = decompose_to_graph(dem, 'Z')
    assert graph.n_edges == 1
    assert int(graph.ev[0]) == -1
    assert math.isclose(float(graph.ew[0]), math.log(99.0), rel_tol=1e-12)
    assert abs(float(graph.ew[0]) - 4.595) < 1e-3


def test_two_detector_mechanism_edge_weight():
    dem = with_mechanisms(Mechanism(0.01, (0, 1), 0))
    graph = decompose_to_graph(dem, 'Z')
    assert graph.n_edges == 1
    assert {int(graph.eu[0]), int(graph.ev[0])} == {0, 1}
    assert math.isclose(float(graph.ew[0]), math.log(99.0), rel_tol=1e-12)


def test_duplicate_edge_probabilities_combine_as_xor():
    dem = with_mechanisms(
        Mechanism(0.1, (0, 1), 0),
        Mechanism(0.05, (2, 3), 0),
        Mechanism(0.1, (0, 1, 2, 3), 0),
    )
    graph = decompose_to_graph(dem, 'Z')
    probs = {(int(graph.eu[i]), int(graph.ev[i])): float(graph.ep[i])
             for i in range(graph.n_edges)}
    assert probs[(0, 1)] == pytest.approx(0.1 * 0.9 + 0.9 * 0.1)      # 0.18
    assert probs[(2, 3)] == pytest.approx(0.05 * 0.9 + 0.95 * 0.1)    # 0.14


def test_tiny_probabilities_clamped_not_dropped():
    dem = with_mechanisms(Mechanism(1e-15, (0,), 0))
    graph = decompose_to_graph(dem, 'Z')
    assert graph.n_edges == 1
    assert float(graph.ep[0]) == PROB_FLOOR
    assert float(graph.ew[0]) > 0


def test_unsplittable_signature_raises():
    with pytest.raises(DecompositionError):
        decompose_to_graph(with_mechanisms(Mechanism(0.1, (0, 1, 2, 3), 0)), 'Z')
    with pytest.raises(DecompositionError):
        decompose_to_graph(with_mechanisms(Mechanism(0.1, (0, 1, 2), 0)), 'Z')


def test_conflicting_logical_bits_raise():
    dem = with_mechanisms(Mechanism(0.1, (0,), 0), Mechanism(0.2, (0,), 1))
    with pytest.raises(DecompositionError):
        decompose_to_graph(dem, 'Z')


def test_logical_flip_invisible_to_basis_raises():
    base = memory_dem(3, 2, 0.003, 'Z')
    x_id = next(i for i, (b, *_rest) in enumerate(base.detectors) if b == 'X')
    dem = dataclasses.replace(base, mechanisms=(Mechanism(0.1, (x_id,), 1),))
    with pytest.raises(DecompositionError):
        decompose_to_graph(dem, 'Z')


@pytest.mark.parametrize('basis', ['Z', 'X'])
def test_memory_model_decomposes_cleanly(basis):
    graph = memory_graph(3, 3, 0.003, basis)
    assert graph.n_edges > 0
    assert np.all(graph.ep > 0)
    assert np.all(graph.ep < 0.5)
    assert np.all(graph.ew > 0)
    assert np.all(graph.eu >= 0)
    assert np.all(graph.eu < graph.n_real)
    assert np.all(graph.ev >= -1)
    assert np.all(graph.ev < graph.n_real)


@pytest.mark.parametrize('basis,lo,hi', [('Z', 1, 4), ('X', 2, 3)])
def test_vertex_grid_spans_expected_layers(basis, lo, hi):
    graph = memory_graph(3, 3, 0.003, 'Z') if basis == 'Z' else \
        decompose_to_graph(memory_dem(3, 3, 0.003, 'Z'), 'X')
    assert graph.layer_lo == lo
    assert graph.layer_hi == hi
    assert graph.n_real == graph.stabs_per_layer * (hi - lo + 1)
    for vid in range(graph.n_real):
        assert graph.vertex_id(int(graph.v_layer[vid]), int(graph.v_pos[vid])) == vid
        assert 0 <= int(graph.v_slot[vid]) < 16


@pytest.mark.parametrize('basis', ['Z', 'X'])
def test_mechanism_edge_lists_reproduce_signatures(basis):
    dem = memory_dem(3, 2, 0.003, 'Z')
    graph = decompose_to_graph(dem, basis)
    local = {}
    for gid, (b, layer, pos, _plaq) in enumerate(dem.detectors):
        if b == basis:
            local[gid] = (layer - graph.layer_lo) * graph.stabs_per_layer + pos
    indptr, comp = graph.mech_edges
    for k, mech in enumerate(dem.mechanisms):
        want = set()
        for g in mech.detectors:
            if g in local:
                want.symmetric_difference_update({local[g]})
        got = set()
        lbits = 0
        for e in comp[indptr[k]:indptr[k + 1]]:
            lbits += int(graph.elog[e])
            for v in (int(graph.eu[e]), int(graph.ev[e])):
                if v >= 0:
                    got.symmetric_difference_update({v})
        assert got == want
        if basis == dem.basis and want:
            assert lbits % 2 == mech.logical


def test_perturbed_weights_are_tiny_and_deterministic():
    a = memory_graph(3, 3, 0.003, 'Z')
    b = decompose_to_graph(memory_dem(3, 3, 0.003, 'Z'), 'Z')
    assert np.all(a.ewp >= a.ew)
    assert np.all(a.ewp - a.ew < 1e-9 * a.w_min)
    assert np.array_equal(a.eid, b.eid)
    assert np.array_equal(a.ewp, b.ewp)
    assert a.w_min == float(a.ew.min())


def test_csv_export_shape_and_determinism():
    graph = memory_graph(3, 2, 0.003, 'Z')
    text = graph_to_csv(graph)
    lines = text.strip().split('\n')
    assert lines[0] == "u_layer,u_pos,v_layer,v_pos,probability,weight,logical"
    assert len(lines) == graph.n_edges + 1
    boundary_rows = sum(1 for ln in lines[1:] if ',B,B,' in ln)
    assert boundary_rows == int(np.sum(graph.ev < 0))
    for ln in lines[1:3]:
        prob = float(ln.split(',')[4])
        assert 0 < prob < 0.5
    assert graph_to_csv(memory_graph(3, 2, 0.003, 'Z')) == text
