"""Shot sampling from a detector error model, with per-window truth labels.

Sampling works directly on the model's mechanisms rather than re-simulating
the circuit: mechanisms are sorted by probability, runs of equal probability
form groups, and within a group the RNG jumps geometrically from firing to
firing.  Each shot owns one counter-seeded stream, so the bits drawn depend
only on (seed, shot index) and any block partition of a run reproduces them.

A firing XORs the mechanism's detectors into the shot's event row and, via
the graph decomposition, contributes per-window truth labels: every
observable-flipping component edge toggles the label of the window owning
its earliest layer.  The XOR of a shot's window labels therefore equals its
global observable bit by construction, which is what makes window-local
training targets usable at all.

File formats are small and self-describing: a six-byte magic, one ascii
``key=value`` header line, then little-endian packed bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dem import DetectorModel
from .graph import DecodingGraph
from .windows import WindowPlan, detector_slot_arrays

_M64 = (1 << 64) - 1


@dataclass
class SamplerArrays:
    """Mechanism tables flattened for the sampling kernel."""
    grp_ptr: np.ndarray        # group boundaries into the sorted order
    grp_log1m: np.ndarray      # ln(1 - p) per group
    det_ptr: np.ndarray        # CSR over sorted mechanisms
    det_ids: np.ndarray        # global detector columns to XOR
    logflag: np.ndarray        # global observable bit per mechanism
    lab_ptr: np.ndarray        # CSR of label layers per mechanism
    lab_layers: np.ndarray     # earliest layer of each logical component edge


@dataclass
class SampleBatch:
    events: np.ndarray         # (shots, num_detectors) uint8
    y_global: np.ndarray       # (shots,) uint8
    y_window: np.ndarray       # (shots, m) uint8
    seed: int
    shot0: int

    @property
    def shots(self) -> int:
        return self.events.shape[0]


def build_sampler(dem: DetectorModel, graph: DecodingGraph) -> SamplerArrays:
    if graph.basis != dem.basis:
        raise ValueError("labels need the memory-basis graph")
    probs = np.array([mech.prob for mech in dem.mechanisms], dtype=np.float64)
    order = np.argsort(probs, kind='stable')

    grp_ptr = [0]
    grp_p = []
    sorted_p = probs[order]
    for k in range(len(order)):
        if k == 0 or sorted_p[k] != sorted_p[k - 1]:
            if k:
                grp_ptr.append(k)
            grp_p.append(sorted_p[k])
    if len(order):
        grp_ptr.append(len(order))
    grp_ptr = np.array(grp_ptr, dtype=np.int64)
    grp_log1m = np.log1p(-np.array(grp_p, dtype=np.float64))
    assert len(grp_ptr) == len(grp_log1m) + 1

    indptr, comp_edges = graph.mech_edges
    det_ptr = np.zeros(len(order) + 1, dtype=np.int64)
    lab_ptr = np.zeros(len(order) + 1, dtype=np.int64)
    det_ids = []
    lab_layers = []
    logflag = np.zeros(len(order), dtype=np.uint8)
    for k, j in enumerate(order):
        mech = dem.mechanisms[j]
        det_ids.extend(mech.detectors)
        det_ptr[k + 1] = len(det_ids)
        logflag[k] = mech.logical
        comp = comp_edges[indptr[j]:indptr[j + 1]]
        layers = [int(graph.e_minlayer[e]) for e in comp if graph.elog[e]]
        assert len(layers) % 2 == mech.logical
        lab_layers.extend(layers)
        lab_ptr[k + 1] = len(lab_layers)

    return SamplerArrays(grp_ptr, grp_log1m, det_ptr,
                         np.array(det_ids, dtype=np.int64), logflag,
                         lab_ptr, np.array(lab_layers, dtype=np.int64))


def sample_events(dem: DetectorModel, graph: DecodingGraph, plan: WindowPlan,
                  shots: int, seed: int, shot0: int = 0,
                  arrays: SamplerArrays = None) -> SampleBatch:
    """Sample a block of shots with detector events and truth labels."""
    if arrays is None:
        arrays = build_sampler(dem, graph)
    events = np.zeros((shots, dem.num_detectors), dtype=np.uint8)
    yglob = np.zeros(shots, dtype=np.uint8)
    ywin = np.zeros((shots, plan.m), dtype=np.uint8)
    K.sample_block(np.uint64(seed & _M64), np.int64(shot0), np.int64(shots),
                   arrays.grp_ptr, arrays.grp_log1m,
                   arrays.det_ptr, arrays.det_ids, arrays.logflag,
                   arrays.lab_ptr, arrays.lab_layers,
                   np.int64(plan.core), np.int64(plan.m),
                   events, yglob, ywin)
    return SampleBatch(events, yglob, ywin, seed, shot0)


# ---------------------------------------------------------------------------
# Plain-python mirror of the kernel's stream, for checking the compiled path.

def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _stream_init(seed: int, shot: int) -> int:
    z = ((seed * 0xD1342543DE82EF95) & _M64) \
        ^ ((shot * 0xAF251AF3B0F025B5) & _M64)
    return _mix64(z ^ 0x9E3779B97F4A7C15)


def _stream_unit(state: int):
    state = (state + 0x9E3779B97F4A7C15) & _M64
    z = _mix64(state)
    return state, ((z >> 11) + 0.5) * 2.0 ** -53


def sample_reference(dem: DetectorModel, graph: DecodingGraph,
                     plan: WindowPlan, shots: int, seed: int,
                     shot0: int = 0, arrays: SamplerArrays = None) -> SampleBatch:
    if arrays is None:
        arrays = build_sampler(dem, graph)
    events = np.zeros((shots, dem.num_detectors), dtype=np.uint8)
    yglob = np.zeros(shots, dtype=np.uint8)
    ywin = np.zeros((shots, plan.m), dtype=np.uint8)
    for si in range(shots):
        st = _stream_init(seed & _M64, shot0 + si)
        for g in range(len(arrays.grp_log1m)):
            pos = int(arrays.grp_ptr[g])
            hi = int(arrays.grp_ptr[g + 1])
            llp = float(arrays.grp_log1m[g])
            while True:
                st, u = _stream_unit(st)
                pos += int(math.floor(math.log(u) / llp))
                if pos >= hi:
                    break
                for k in range(arrays.det_ptr[pos], arrays.det_ptr[pos + 1]):
                    events[si, arrays.det_ids[k]] ^= 1
                yglob[si] ^= arrays.logflag[pos]
                for k in range(arrays.lab_ptr[pos], arrays.lab_ptr[pos + 1]):
                    w = min((int(arrays.lab_layers[k]) - 1) // plan.core,
                            plan.m - 1)
                    ywin[si, w] ^= 1
                pos += 1
    return SampleBatch(events, yglob, ywin, seed, shot0)


@dataclass
class Shot:
    """One sampled error configuration with its detector readout."""
    error_config: tuple        # fired mechanism indices, dem.mechanisms order
    events: np.ndarray         # (num_detectors,) uint8
    y_global: int


@dataclass
class WindowLabels:
    y: np.ndarray              # (m,) uint8, one truth bit per window


def sample_shot(dem: DetectorModel, seed: int, shot_index: int = 0) -> Shot:
    """Draw one shot, keeping the list of mechanisms that fired.

    Uses the same counter-based stream as :func:`sample_events`, so the
    events row equals row ``shot_index`` of a batch with the same seed.
    """
    probs = np.array([mech.prob for mech in dem.mechanisms], dtype=np.float64)
    order = np.argsort(probs, kind='stable')
    sorted_p = probs[order]
    events = np.zeros(dem.num_detectors, dtype=np.uint8)
    fired = []
    yglob = 0
    st = _stream_init(seed & _M64, shot_index)
    g0 = 0
    while g0 < len(order):
        g1 = g0
        while g1 < len(order) and sorted_p[g1] == sorted_p[g0]:
            g1 += 1
        if sorted_p[g0] > 0.0:
            llp = math.log1p(-sorted_p[g0])
            pos = g0
            while True:
                st, u = _stream_unit(st)
                pos += int(math.floor(math.log(u) / llp))
                if pos >= g1:
                    break
                j = int(order[pos])
                mech = dem.mechanisms[j]
                for det in mech.detectors:
                    events[det] ^= 1
                yglob ^= mech.logical
                fired.append(j)
                pos += 1
        g0 = g1
    return Shot(error_config=tuple(sorted(fired)), events=events,
                y_global=yglob)


def truncated_labels(dem: DetectorModel, graph: DecodingGraph,
                     plan: WindowPlan, shots: int, seed: int,
                     shot0: int = 0,
                     arrays: SamplerArrays = None) -> np.ndarray:
    """Truth bits for every truncated core size, shape (shots, m*core).

    Column ``i*core + (tau-1)`` is the label window ``i`` would carry if
    its core region stopped after its first ``tau`` layers; faults owned
    beyond layer ``i*core + core`` (the final window's extended span) fold
    into the ``tau == core`` column, so that column always equals the
    window's full label from :func:`sample_events` on the same stream.
    """
    if arrays is None:
        arrays = build_sampler(dem, graph)
    out = np.zeros((shots, plan.m * plan.core), dtype=np.uint8)
    K.sample_block_trunc(np.uint64(seed & _M64), np.int64(shot0),
                         np.int64(shots), arrays.grp_ptr, arrays.grp_log1m,
                         arrays.lab_ptr, arrays.lab_layers,
                         np.int64(plan.core), np.int64(plan.m), out)
    return out


def derive_window_labels(shot: Shot, plan: WindowPlan,
                         graph: DecodingGraph) -> WindowLabels:
    """Per-window truth bits for one shot, from first principles.

    Walks the fired mechanisms' component edges and toggles the label of
    the window whose core owns each observable-flipping edge's earliest
    layer.  The XOR across windows always reproduces ``shot.y_global``.
    """
    indptr, comp_edges = graph.mech_edges
    y = np.zeros(plan.m, dtype=np.uint8)
    for j in shot.error_config:
        for e in comp_edges[indptr[j]:indptr[j + 1]]:
            if graph.elog[e]:
                layer = int(graph.e_minlayer[e])
                if not 1 <= layer <= plan.n_layers:
                    raise ValueError(
                        f"edge layer {layer} has no owning core region")
                y[plan.owner_of_layer(layer)] ^= 1
    return WindowLabels(y=y)


# ---------------------------------------------------------------------------
# Event and label files.

_EV_MAGIC = b"WDEV1\n"
_LB_MAGIC = b"WDLB1\n"
_WT_MAGIC = b"WDWT1\n"
_GP_MAGIC = b"WDGP1\n"
_TL_MAGIC = b"WDTL1\n"


def _header_bytes(fields: dict) -> bytes:
    return (" ".join(f"{k}={v}" for k, v in fields.items()) + "\n").encode()


def _read_header(fh, magic: bytes) -> dict:
    got = fh.read(len(magic))
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    line = b""
    while not line.endswith(b"\n"):
        ch = fh.read(1)
        if not ch:
            raise ValueError("truncated header")
        line += ch
    fields = {}
    for tok in line.decode().split():
        k, v = tok.split("=", 1)
        fields[k] = v
    return fields


def _pack_rows(bits: np.ndarray) -> bytes:
    return np.packbits(bits, axis=1, bitorder='little').tobytes()


def _unpack_rows(raw: bytes, rows: int, cols: int) -> np.ndarray:
    nbytes = -(-cols // 8)
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(rows, nbytes)
    return np.unpackbits(arr, axis=1, count=cols, bitorder='little')


def write_events(path: str, batch: SampleBatch, dem: DetectorModel) -> None:
    head = _header_bytes({
        'd': dem.distance, 'rounds': dem.rounds, 'basis': dem.basis,
        'p': repr(dem.p), 'shots': batch.shots,
        'detectors': dem.num_detectors,
        'seed': batch.seed, 'shot0': batch.shot0,
    })
    with open(path, 'wb') as fh:
        fh.write(_EV_MAGIC)
        fh.write(head)
        fh.write(_pack_rows(batch.events))


def read_events(path: str):
    with open(path, 'rb') as fh:
        meta = _read_header(fh, _EV_MAGIC)
        shots = int(meta['shots'])
        ndet = int(meta['detectors'])
        events = _unpack_rows(fh.read(), shots, ndet)
    return events, meta


def write_labels(path: str, batch: SampleBatch, plan: WindowPlan) -> None:
    m = batch.y_window.shape[1]
    bits = np.empty((batch.shots, m + 1), dtype=np.uint8)
    bits[:, 0] = batch.y_global
    bits[:, 1:] = batch.y_window
    head = _header_bytes({
        'shots': batch.shots, 'm': m, 'rounds': plan.rounds,
        'buffer': plan.buffer, 'core': plan.core,
        'seed': batch.seed, 'shot0': batch.shot0,
    })
    with open(path, 'wb') as fh:
        fh.write(_LB_MAGIC)
        fh.write(head)
        fh.write(_pack_rows(bits))


def read_labels(path: str):
    with open(path, 'rb') as fh:
        meta = _read_header(fh, _LB_MAGIC)
        shots = int(meta['shots'])
        m = int(meta['m'])
        bits = _unpack_rows(fh.read(), shots, m + 1)
    return bits[:, 0].copy(), bits[:, 1:].copy(), meta


def write_truncated_labels(path: str, plan: WindowPlan, ytrunc: np.ndarray,
                           seed: int, shot0: int = 0) -> None:
    shots = ytrunc.shape[0]
    if ytrunc.shape[1] != plan.m * plan.core:
        raise ValueError(
            f"expected {plan.m * plan.core} columns, got {ytrunc.shape[1]}")
    head = _header_bytes({
        'shots': shots, 'm': plan.m, 'rounds': plan.rounds,
        'buffer': plan.buffer, 'core': plan.core,
        'seed': seed, 'shot0': shot0,
    })
    with open(path, 'wb') as fh:
        fh.write(_TL_MAGIC)
        fh.write(head)
        fh.write(_pack_rows(np.ascontiguousarray(ytrunc, dtype=np.uint8)))


def read_truncated_labels(path: str):
    with open(path, 'rb') as fh:
        meta = _read_header(fh, _TL_MAGIC)
        shots = int(meta['shots'])
        cols = int(meta['m']) * int(meta['core'])
        bits = _unpack_rows(fh.read(), shots, cols)
    return bits.copy(), meta


# ---------------------------------------------------------------------------
# Training datasets: per-window tensors plus labels.

def _window_gather(dem: DetectorModel, plan: WindowPlan, i: int) -> tuple:
    """(detector columns, flat tensor positions) for window i's tensor."""
    d = dem.distance
    width = (d + 1) * (d + 1)
    det_layer, det_slot = detector_slot_arrays(dem)
    lo, hi = plan.span(i)
    sel = np.nonzero((det_layer >= lo) & (det_layer <= hi))[0]
    tpos = np.empty(len(sel), dtype=np.int64)
    for k, g in enumerate(sel):
        tpos[k] = plan.slot_of_layer(i, int(det_layer[g])) * width \
            + int(det_slot[g])
    return sel, tpos


def window_tensor_block(dem: DetectorModel, plan: WindowPlan, i: int,
                        events: np.ndarray) -> np.ndarray:
    """All shots' tensors for window i, shape (shots, depth, d+1, d+1)."""
    d = dem.distance
    depth = 2 * plan.buffer + plan.core
    width = (d + 1) * (d + 1)
    sel, tpos = _window_gather(dem, plan, i)
    flat = np.zeros((events.shape[0], depth * width), dtype=np.uint8)
    flat[:, tpos] = events[:, sel]
    return flat.reshape(events.shape[0], depth, d + 1, d + 1)


def write_window_dataset(path: str, dem: DetectorModel, plan: WindowPlan,
                         events: np.ndarray, y_window: np.ndarray,
                         windows) -> None:
    """Write (tensor, label) records for the given windows of every shot.

    All requested windows must share one window type, so a file holds
    homogeneous training records and the type travels in the header.
    """
    windows = list(windows)
    types = {plan.window_type(i) for i in windows}
    if len(types) != 1:
        raise ValueError(f"windows mix types: {sorted(types)}")
    d = dem.distance
    depth = 2 * plan.buffer + plan.core
    width = (d + 1) * (d + 1)
    shots = events.shape[0]
    nrec = shots * len(windows)
    bits = np.empty((nrec, depth * width + 1), dtype=np.uint8)
    row = 0
    for i in windows:
        blk = window_tensor_block(dem, plan, i, events)
        bits[row:row + shots, :-1] = blk.reshape(shots, -1)
        bits[row:row + shots, -1] = y_window[:, i]
        row += shots
    head = _header_bytes({
        'd': d, 'rounds': plan.rounds, 'buffer': plan.buffer,
        'core': plan.core, 'window_type': types.pop(),
        'depth': depth, 'records': nrec,
        'windows': ",".join(str(i) for i in windows), 'shots': shots,
    })
    with open(path, 'wb') as fh:
        fh.write(_WT_MAGIC)
        fh.write(head)
        fh.write(_pack_rows(bits))


def read_window_dataset(path: str):
    with open(path, 'rb') as fh:
        meta = _read_header(fh, _WT_MAGIC)
        d = int(meta['d'])
        depth = int(meta['depth'])
        nrec = int(meta['records'])
        width = (d + 1) * (d + 1)
        bits = _unpack_rows(fh.read(), nrec, depth * width + 1)
    tensors = bits[:, :-1].reshape(nrec, depth, d + 1, d + 1).copy()
    return tensors, bits[:, -1].copy(), meta


def write_grouped_dataset(path: str, dem: DetectorModel, plan: WindowPlan,
                          events: np.ndarray, y_global: np.ndarray) -> None:
    """Per shot: every window's tensor in order plus the global label bit."""
    d = dem.distance
    depth = 2 * plan.buffer + plan.core
    width = (d + 1) * (d + 1)
    shots = events.shape[0]
    per = depth * width
    bits = np.empty((shots, plan.m * per + 1), dtype=np.uint8)
    for i in range(plan.m):
        blk = window_tensor_block(dem, plan, i, events)
        bits[:, i * per:(i + 1) * per] = blk.reshape(shots, -1)
    bits[:, -1] = y_global
    head = _header_bytes({
        'd': d, 'rounds': plan.rounds, 'buffer': plan.buffer,
        'core': plan.core, 'm': plan.m, 'depth': depth, 'shots': shots,
    })
    with open(path, 'wb') as fh:
        fh.write(_GP_MAGIC)
        fh.write(head)
        fh.write(_pack_rows(bits))


def read_grouped_dataset(path: str):
    with open(path, 'rb') as fh:
        meta = _read_header(fh, _GP_MAGIC)
        d = int(meta['d'])
        depth = int(meta['depth'])
        m = int(meta['m'])
        shots = int(meta['shots'])
        width = (d + 1) * (d + 1)
        per = depth * width
        bits = _unpack_rows(fh.read(), shots, m * per + 1)
    tensors = bits[:, :-1].reshape(shots, m, depth, d + 1, d + 1).copy()
    return tensors, bits[:, -1].copy(), meta


# ---------------------------------------------------------------------------
# Per-window probability predictions (text, one line per shot and window).

def write_predictions(path: str, probs: np.ndarray) -> None:
    shots, m = probs.shape
    with open(path, 'w') as fh:
        fh.write(f"shots={shots} m={m}\n")
        for si in range(shots):
            for i in range(m):
                fh.write(f"{si} {i} {float(probs[si, i])!r}\n")


def read_predictions(path: str) -> np.ndarray:
    with open(path) as fh:
        head = dict(tok.split("=", 1) for tok in fh.readline().split())
        probs = np.zeros((int(head['shots']), int(head['m'])), dtype=np.float64)
        for line in fh:
            si, i, v = line.split()
            probs[int(si), int(i)] = float(v)
    return probs
