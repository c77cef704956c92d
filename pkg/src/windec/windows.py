"""Sliding-window partition of a memory experiment.

The round axis counts detection-event slices: a memory with N measurement
rounds has N+1 slices for the matching basis (the last one from the
transversal readout).  Window i (0-based) owns core layers
``(i*c, (i+1)*c]``; the final window's core extends to N+1, so with c | N it
holds one extra layer which lands in the first slot of its right padding.
``m = ceil(N / c)`` windows always cover everything and every edge of the
decoding graph belongs to exactly one core, keyed by its minimum endpoint
layer.  Buffers of b layers flank each core; zero padding stands in where a
buffer (or the tail of the final core) runs off the experiment.

Window subgraphs keep global layer numbering.  An edge leaving the window
span is retargeted to a time-virtual vertex that remembers the outside
detector; virtual vertices are matchable (chains may end there at the cost of
reaching them) and count in correction boundaries, unlike the space boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DecodingGraph


@dataclass(frozen=True)
class WindowPlan:
    rounds: int            # N
    buffer: int            # b
    core: int              # c
    m: int
    n_layers: int          # N + 1

    def window_type(self, i: int) -> str:
        if self.m == 1:
            return 'initial+final'
        if i == 0:
            return 'initial'
        if i == self.m - 1:
            return 'final'
        return 'bulk'

    def core_span(self, i: int):
        lo = i * self.core + 1
        hi = (i + 1) * self.core if i < self.m - 1 else self.n_layers
        return lo, hi

    def span(self, i: int):
        """Real layers covered by the window tensor's slots."""
        lo = max(1, i * self.core - self.buffer + 1)
        hi = min(self.n_layers, i * self.core + self.core + self.buffer)
        return lo, hi

    def slot_of_layer(self, i: int, layer: int) -> int:
        return layer - (i * self.core - self.buffer) - 1

    def owner_of_layer(self, layer: int) -> int:
        return min((layer - 1) // self.core, self.m - 1)

    def seam_layers(self, i: int):
        """The two layers straddling the seam between windows i and i+1."""
        return (i + 1) * self.core, (i + 1) * self.core + 1


def plan_windows(rounds: int, buffer: int, core: int) -> WindowPlan:
    """Partition an N-round memory into overlapping decode windows.

    Parameters
    ----------
    rounds : int
        Measurement rounds N >= 1.
    buffer : int
        Buffer depth b >= 1 on both sides of each core.
    core : int
        Core depth c >= 1; the commit region each window owns.
    """
    if rounds < 1 or buffer < 1 or core < 1:
        raise ValueError("rounds, buffer, core must all be >= 1")
    m = -(-rounds // core)
    plan = WindowPlan(rounds, buffer, core, m, rounds + 1)
    # Cores partition all layers.
    covered = []
    for i in range(m):
        lo, hi = plan.core_span(i)
        covered.extend(range(lo, hi + 1))
    assert covered == list(range(1, plan.n_layers + 1))
    return plan


def window_subgraph(graph: DecodingGraph, plan: WindowPlan, i: int) -> DecodingGraph:
    """Extract window i's decode graph from the full-memory graph.

    The result keeps global layer numbers and carries ``parent_edge`` /
    ``virt_global`` maps back into the parent.  Perturbed weights are copied
    bitwise, so any two windows sharing a parent edge agree on it exactly.
    """
    if not 0 <= i < plan.m:
        raise ValueError("window index out of range")
    s = graph.stabs_per_layer
    lo, hi = plan.span(i)
    lo = max(lo, graph.layer_lo)
    hi = min(hi, graph.layer_hi)
    vid0 = (lo - graph.layer_lo) * s
    n_real = (hi - lo + 1) * s

    inside_u = (graph.v_layer[graph.eu] >= lo) & (graph.v_layer[graph.eu] <= hi)
    v_real = graph.ev >= 0
    layer_v = np.where(v_real, graph.v_layer[np.maximum(graph.ev, 0)], 0)
    inside_v = v_real & (layer_v >= lo) & (layer_v <= hi)
    keep = inside_u | inside_v

    virt_map: dict[int, int] = {}
    eu_w, ev_w, parent = [], [], []
    for e in np.nonzero(keep)[0]:
        u, v = int(graph.eu[e]), int(graph.ev[e])
        u_in = bool(inside_u[e])
        v_in = bool(inside_v[e])
        if u_in:
            lu = u - vid0
        else:
            lu = virt_map.setdefault(u, n_real + len(virt_map))
        if v < 0:
            lv = -1
        elif v_in:
            lv = v - vid0
        else:
            lv = virt_map.setdefault(v, n_real + len(virt_map))
        # keep the real endpoint in eu where possible
        if not u_in and v_in:
            lu, lv = lv, lu
        eu_w.append(lu)
        ev_w.append(lv)
        parent.append(e)

    parent = np.array(parent, dtype=np.int64)
    n_virt = len(virt_map)
    virt_global = np.empty(n_virt, dtype=np.int32)
    for gvid, lvid in virt_map.items():
        virt_global[lvid - n_real] = gvid

    v_layer = np.empty(n_real + n_virt, dtype=np.int32)
    v_pos = np.empty(n_real + n_virt, dtype=np.int32)
    v_slot = np.empty(n_real + n_virt, dtype=np.int32)
    v_layer[:n_real] = graph.v_layer[vid0:vid0 + n_real]
    v_pos[:n_real] = graph.v_pos[vid0:vid0 + n_real]
    v_slot[:n_real] = graph.v_slot[vid0:vid0 + n_real]
    v_layer[n_real:] = graph.v_layer[virt_global]
    v_pos[n_real:] = graph.v_pos[virt_global]
    v_slot[n_real:] = graph.v_slot[virt_global]

    sub = DecodingGraph(
        graph.basis, graph.distance, graph.rounds, s, lo, hi,
        n_real, n_virt, v_layer, v_pos, v_slot,
        np.array(eu_w, dtype=np.int32), np.array(ev_w, dtype=np.int32),
        graph.ep[parent], graph.ew[parent], graph.ewp[parent],
        graph.elog[parent], graph.e_minlayer[parent], graph.eid[parent],
        graph.w_min, (None, None), parent, virt_global)
    return sub


def core_edge_mask(graph_or_sub: DecodingGraph, plan: WindowPlan, i: int) -> np.ndarray:
    """uint8 mask: which edges window i commits (min layer inside its core)."""
    owner = np.minimum((graph_or_sub.e_minlayer - 1) // plan.core, plan.m - 1)
    return (owner == i).astype(np.uint8)


def extract_window_tensor(events_row: np.ndarray, det_layer: np.ndarray,
                          det_slot: np.ndarray, plan: WindowPlan, i: int,
                          d: int) -> np.ndarray:
    """Pack one shot's events into the window's (b+c+b, d+1, d+1) tensor.

    ``events_row`` covers every detector of the experiment (both bases);
    ``det_layer``/``det_slot`` give each detector's slice and its cell in the
    stabilizer slot grid.  Slots outside the experiment stay zero, which is
    what closes the time boundaries of the initial and final windows.
    """
    depth = 2 * plan.buffer + plan.core
    width = (d + 1) * (d + 1)
    tensor = np.zeros(depth * width, dtype=np.uint8)
    lo, hi = plan.span(i)
    sel = np.nonzero((det_layer >= lo) & (det_layer <= hi) & (events_row != 0))[0]
    for g in sel:
        slot = plan.slot_of_layer(i, int(det_layer[g]))
        tensor[slot * width + int(det_slot[g])] = 1
    return tensor.reshape(depth, d + 1, d + 1)


def detector_slot_arrays(dem) -> tuple:
    """Per-detector (layer, slot-grid cell) arrays for tensor extraction."""
    d = dem.distance
    layers = np.empty(dem.num_detectors, dtype=np.int32)
    slots = np.empty(dem.num_detectors, dtype=np.int32)
    for gid, (_b, layer, _pos, plaq) in enumerate(dem.detectors):
        layers[gid] = layer
        slots[gid] = (plaq[0] + 1) * (d + 1) + (plaq[1] + 1)
    return layers, slots
