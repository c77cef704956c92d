"""Per-basis matchable decoding graphs from a detector error model.

Vertices are the detectors of one basis, indexed ``(layer-1)*s + pos`` for the
memory basis (layers 1..N+1) and ``(layer-2)*s + pos`` for the other (layers
2..N), with ``s = (d^2-1)/2`` stabilizers per layer.  Edges come from
mechanism decomposition:

* a mechanism's detector set restricted to the basis, if it has more than two
  detectors, is split into components that each match the signature of some
  single already-graphlike mechanism (the primitive dictionary);
* every component inherits the full mechanism probability, and components
  from different mechanisms landing on the same (endpoints, logical) edge
  merge via q <- q(1-p) + p(1-q);
* a failed split raises, never silently drops.

Logical membership is attributed entirely to the memory-basis graph: the
observable is read out in that basis, and every observable-flipping fault
touches its detectors.  The split must reproduce the mechanism's logical flip
as the XOR of its components' dictionary bits, which is checked per mechanism.

Determinism: each edge carries a canonical identity hash (basis, endpoint
coordinates, logical bit) whose fractional part perturbs the weight by at
most 1e-9 * w_min.  Optima become unique and every subgraph sharing an edge
sees bitwise the same perturbed weight.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .dem import DetectorModel, PROB_FLOOR


class DecompositionError(ValueError):
    pass


@dataclass
class DecodingGraph:
    basis: str
    distance: int
    rounds: int
    stabs_per_layer: int
    layer_lo: int               # first layer of this basis (1 or 2)
    layer_hi: int               # last layer (N+1 or N)
    n_real: int
    n_virt: int                 # 0 for full graphs; >0 only in window subgraphs
    v_layer: np.ndarray
    v_pos: np.ndarray
    v_slot: np.ndarray          # row*(d+1)+col in the stabilizer slot grid
    eu: np.ndarray
    ev: np.ndarray              # -1 encodes the space boundary
    ep: np.ndarray
    ew: np.ndarray
    ewp: np.ndarray
    elog: np.ndarray
    e_minlayer: np.ndarray
    eid: np.ndarray
    w_min: float
    mech_edges: tuple = (None, None)      # CSR (indptr, edge ids) per mechanism
    parent_edge: np.ndarray = None        # window graphs: local -> parent edge
    virt_global: np.ndarray = None        # window graphs: virtual vid -> parent vid

    @property
    def n_vertices(self) -> int:
        return self.n_real + self.n_virt

    @property
    def n_edges(self) -> int:
        return len(self.eu)

    def vertex_id(self, layer: int, pos: int) -> int:
        return (layer - self.layer_lo) * self.stabs_per_layer + pos


def _edge_identity(basis: str, desc_u, desc_v, logical: int) -> int:
    a, b = sorted((desc_u, desc_v))
    key = f"{basis}|{a}|{b}|{logical}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def decompose_to_graph(dem: DetectorModel, basis: str) -> DecodingGraph:
    """Build the matchable graph of one basis from the model's mechanisms."""
    d, N = dem.distance, dem.rounds
    s = (d * d - 1) // 2
    layer_lo = 1 if basis == dem.basis else 2
    layer_hi = N + 1 if basis == dem.basis else N

    det_meta = dem.detectors
    local = {}                  # global detector id -> local vertex id
    for gid, (b, layer, pos, _plaq) in enumerate(det_meta):
        if b == basis:
            local[gid] = (layer - layer_lo) * s + pos
    n_real = s * (layer_hi - layer_lo + 1) if layer_hi >= layer_lo else 0
    carry_logical = basis == dem.basis

    # Primitive dictionary: basis-restricted signatures of size 1..2.
    prim = {}
    restricted = []
    for mech in dem.mechanisms:
        r = tuple(sorted(local[g] for g in mech.detectors if g in local))
        restricted.append(r)
        if 1 <= len(r) <= 2:
            lbit = mech.logical if carry_logical else 0
            if r in prim:
                if prim[r] != lbit:
                    raise DecompositionError(
                        f"signature {r} seen with both logical bits")
            else:
                prim[r] = lbit

    edge_acc = {}               # (u, v, logical) -> prob
    mech_edge_lists = []
    for mech, r in zip(dem.mechanisms, restricted):
        lbit = mech.logical if carry_logical else 0
        if not r:
            if lbit:
                raise DecompositionError("observable flip invisible to its basis")
            mech_edge_lists.append(())
            continue
        parts = _split(r, lbit, prim)
        keys = []
        for comp in parts:
            u = comp[0]
            v = comp[1] if len(comp) == 2 else -1
            key = (u, v, prim[comp])
            q = edge_acc.get(key, 0.0)
            edge_acc[key] = q * (1 - mech.prob) + mech.prob * (1 - q)
            keys.append(key)
        mech_edge_lists.append(tuple(keys))

    keys = sorted(edge_acc)
    key_index = {k: i for i, k in enumerate(keys)}
    n_edges = len(keys)
    eu = np.empty(n_edges, dtype=np.int32)
    ev = np.empty(n_edges, dtype=np.int32)
    ep = np.empty(n_edges, dtype=np.float64)
    elog = np.empty(n_edges, dtype=np.uint8)
    e_minlayer = np.empty(n_edges, dtype=np.int32)
    eid = np.empty(n_edges, dtype=np.uint64)

    v_layer = np.empty(n_real, dtype=np.int32)
    v_pos = np.empty(n_real, dtype=np.int32)
    v_slot = np.empty(n_real, dtype=np.int32)
    plaq_of_pos = {}
    for b, layer, pos, plaq in det_meta:
        if b == basis:
            plaq_of_pos[pos] = plaq
    for vid in range(n_real):
        layer = layer_lo + vid // s
        pos = vid % s
        v_layer[vid] = layer
        v_pos[vid] = pos
        pr, pc = plaq_of_pos[pos]
        v_slot[vid] = (pr + 1) * (d + 1) + (pc + 1)

    def desc(vid):
        return (int(v_layer[vid]), int(v_pos[vid]))

    for i, (u, v, lbit) in enumerate(keys):
        eu[i], ev[i], elog[i] = u, v, lbit
        p = min(max(edge_acc[(u, v, lbit)], PROB_FLOOR), 0.5 - 1e-9)
        ep[i] = p
        e_minlayer[i] = v_layer[u] if v < 0 else min(v_layer[u], v_layer[v])
        eid[i] = _edge_identity(basis, desc(u), (-1, -1) if v < 0 else desc(v), lbit)

    ew = np.log((1.0 - ep) / ep)
    assert np.all(ew > 0)
    w_min = float(ew.min()) if n_edges else 1.0
    frac = (eid.astype(np.float64) / 2.0 ** 64)
    ewp = ew + frac * 1e-9 * w_min

    indptr = np.zeros(len(dem.mechanisms) + 1, dtype=np.int64)
    flat = []
    for i, lst in enumerate(mech_edge_lists):
        flat.extend(key_index[k] for k in lst)
        indptr[i + 1] = len(flat)
    mech_edges = (indptr, np.array(flat, dtype=np.int32))

    return DecodingGraph(basis, d, N, s, layer_lo, layer_hi, n_real, 0,
                         v_layer, v_pos, v_slot, eu, ev, ep, ew, ewp, elog,
                         e_minlayer, eid, w_min, mech_edges)


def _split(r: tuple, logical: int, prim: dict):
    """Partition a restricted signature into dictionary components."""
    if len(r) <= 2:
        if r not in prim:
            prim[r] = logical       # first sighting defines the primitive
        return (r,)
    for parts in _partitions(r):
        if all(p in prim for p in parts):
            if sum(prim[p] for p in parts) % 2 == logical % 2:
                return parts
    raise DecompositionError(f"cannot split signature {r}")


def _partitions(r: tuple):
    """Candidate partitions, pairs-heavy first, deterministic order."""
    if len(r) == 3:
        a, b, c = r
        for pair, single in (((a, b), (c,)), ((a, c), (b,)), ((b, c), (a,))):
            yield (pair, single)
        yield ((a,), (b,), (c,))
    elif len(r) == 4:
        a, b, c, d = r
        for p1, p2 in (((a, b), (c, d)), ((a, c), (b, d)), ((a, d), (b, c))):
            yield (p1, p2)
        for pair in ((a, b), (a, c), (a, d), (b, c), (b, d), (c, d)):
            rest = tuple(x for x in r if x not in pair)
            yield (pair, (rest[0],), (rest[1],))
        yield tuple((x,) for x in r)
    else:
        raise DecompositionError(f"signature too large to split: {r}")


# ---------------------------------------------------------------------------
# Edge-list CSV.

def graph_to_csv(graph: DecodingGraph) -> str:
    lines = ["u_layer,u_pos,v_layer,v_pos,probability,weight,logical"]
    for i in range(graph.n_edges):
        u, v = int(graph.eu[i]), int(graph.ev[i])
        uc = f"{graph.v_layer[u]},{graph.v_pos[u]}"
        vc = f"{graph.v_layer[v]},{graph.v_pos[v]}" if v >= 0 else "B,B"
        lines.append(f"{uc},{vc},{float(graph.ep[i])!r},"
                     f"{float(graph.ew[i])!r},{int(graph.elog[i])}")
    return "\n".join(lines) + "\n"
