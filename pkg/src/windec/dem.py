"""Detector error model: single-fault propagation, enumeration, merging.

Every noisy location in the circuit contributes a small set of equiprobable
fault generators (one per selectable Pauli, or one outcome flip).  Each fault
propagates forward through the Clifford structure to a signature, the set of
detectors it flips plus whether it flips the tracked logical observable.
Faults with identical signatures merge into a single mechanism with combined
probability q <- q(1-p) + p(1-q), since an even number of firings cancels.

For long memories the bulk rounds are identical, so signatures of bulk faults
are time translates of each other.  ``build_memory_dem`` exploits this: it
enumerates a short template circuit once and tiles the bulk slot across the
target length, which keeps DEM construction O(1) in the number of rounds.
Equality with direct enumeration is asserted in the tests over the whole
head/bulk/tail seam range.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .circuit import CliffordCircuit, build_memory_circuit
from .layout import build_rotated_surface_code

PROB_FLOOR = 1e-12

_PAULI_BITS = {'X': (1, 0), 'Y': (1, 1), 'Z': (0, 1)}
_TWO_QUBIT_PAULIS = [(a, b) for a in 'IXYZ' for b in 'IXYZ'][1:]


class Fault(NamedTuple):
    """One elementary fault: a Pauli injected after ``op_index``, or an
    outcome flip (``paulis is None``) of measurement ``meas_index``."""
    op_index: int
    paulis: tuple          # ((qubit, 'X'|'Y'|'Z'), ...) or None for a flip
    meas_index: int = -1


class Mechanism(NamedTuple):
    prob: float
    detectors: tuple       # sorted global detector ids
    logical: int


@dataclass
class DetectorModel:
    distance: int
    rounds: int
    basis: str
    p: float
    detectors: tuple       # (basis, layer, pos, plaquette) per id
    mechanisms: tuple

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)


def propagate_fault(circ: CliffordCircuit, fault: Fault):
    """Propagate one fault to its signature.

    Returns
    -------
    (frozenset of detector ids, logical flip bit)
    """
    flips = np.zeros(circ.num_meas, dtype=np.uint8)
    if fault.paulis is None:
        flips[fault.meas_index] = 1
    else:
        n = circ.n_qubits
        x = np.zeros(n, dtype=np.uint8)
        z = np.zeros(n, dtype=np.uint8)
        for q, pauli in fault.paulis:
            xb, zb = _PAULI_BITS[pauli]
            x[q] ^= xb
            z[q] ^= zb
        for op in circ.ops[fault.op_index + 1:]:
            q = op.q1
            if op.kind == 'CX':
                x[op.q2] ^= x[q]
                z[q] ^= z[op.q2]
            elif op.kind == 'M':
                flips[op.meas_base:op.meas_base + len(q)] ^= x[q]
            elif op.kind == 'H':
                tmp = x[q].copy()
                x[q] = z[q]
                z[q] = tmp
            elif op.kind == 'R':
                x[q] = 0
                z[q] = 0
            # noise annotations carry no deterministic action

    dets = frozenset(
        i for i, det in enumerate(circ.detectors)
        if int(flips[list(det.meas)].sum()) % 2
    )
    logical = int(flips[list(circ.observable)].sum()) % 2
    return dets, logical


def enumerate_faults(circ: CliffordCircuit):
    """Yield (probability, Fault, round_tag) for every elementary fault.

    round_tag is the 1-based round the fault's op belongs to (final readout
    ops count as round N), used by the template tiling.
    """
    round_of = _op_rounds(circ)
    for i, op in enumerate(circ.ops):
        tag = round_of[i]
        if op.kind == 'M' and op.prob > 0:
            for k in range(len(op.q1)):
                yield op.prob, Fault(i, None, op.meas_base + k), tag
        elif op.kind == 'XERR' and op.prob > 0:
            for q in op.q1:
                yield op.prob, Fault(i, ((int(q), 'X'),)), tag
        elif op.kind == 'ZERR' and op.prob > 0:
            for q in op.q1:
                yield op.prob, Fault(i, ((int(q), 'Z'),)), tag
        elif op.kind == 'DEP1' and op.prob > 0:
            for q in op.q1:
                for pauli in 'XYZ':
                    yield op.prob / 3, Fault(i, ((int(q), pauli),)), tag
        elif op.kind == 'DEP2' and op.prob > 0:
            for a, b in zip(op.q1, op.q2):
                for pa, pb in _TWO_QUBIT_PAULIS:
                    paulis = tuple(
                        (int(q), pp) for q, pp in ((a, pa), (b, pb)) if pp != 'I')
                    yield op.prob / 15, Fault(i, paulis), tag


def _op_rounds(circ: CliffordCircuit):
    """1-based round index per op.  Every round opens with one reset op, and
    the trailing data idles / final readout stay with the round just closed."""
    rounds = []
    r = 0
    for op in circ.ops:
        if op.kind == 'R':
            r += 1
        rounds.append(r)
    assert r == circ.rounds
    return rounds


def merge_mechanisms(signatures):
    """Combine (prob, detector frozenset, logical) triples by signature."""
    acc = {}
    for p, dets, logical in signatures:
        key = (dets, logical)
        q = acc.get(key, 0.0)
        acc[key] = q * (1.0 - p) + p * (1.0 - q)
    mechs = []
    for (dets, logical), q in acc.items():
        if not dets and not logical:
            continue                       # fault invisible to this experiment
        assert dets or not logical, "logical flip with no detectors"
        mechs.append(Mechanism(max(q, PROB_FLOOR), tuple(sorted(dets)), logical))
    mechs.sort(key=lambda m: (m.detectors, m.logical))
    return tuple(mechs)


def build_dem(circ: CliffordCircuit) -> DetectorModel:
    """Enumerate every fault of the circuit directly and merge."""
    sigs = []
    for p, fault, _ in enumerate_faults(circ):
        dets, logical = propagate_fault(circ, fault)
        sigs.append((p, dets, logical))
    det_meta = tuple((d.basis, d.layer, d.pos, d.plaquette) for d in circ.detectors)
    return DetectorModel(circ.layout.distance, circ.rounds, circ.basis, circ.p,
                         det_meta, merge_mechanisms(sigs))


# ---------------------------------------------------------------------------
# Template construction for long memories.

_TEMPLATE_ROUNDS = 9
_HEAD = 4          # rounds copied verbatim from the template head
_BULK_SLOT = 5     # the translation-invariant round
_TAIL = 4          # rounds copied from the template tail


def _detector_id_map(d: int, rounds: int, basis: str):
    """Closed-form detector id for (basis, layer, pos) in a memory circuit."""
    s = (d * d - 1) // 2
    other = 'X' if basis == 'Z' else 'Z'

    def det_id(b: str, layer: int) -> int:
        base = 0 if layer == 1 else s + 2 * s * (layer - 2)
        if b == basis:
            return base
        assert 2 <= layer <= rounds and b == other
        return base + s
    return det_id, s


def build_memory_dem(d: int, rounds: int, p: float, basis: str = 'Z') -> DetectorModel:
    """Detector error model of the memory experiment, O(1) in rounds.

    Falls back to direct enumeration for short circuits; otherwise tiles the
    bulk round of a 9-round template across the target length.
    """
    if rounds < _TEMPLATE_ROUNDS + 1:
        return build_dem(build_memory_circuit(d, rounds, p, basis))

    tcirc = build_memory_circuit(d, _TEMPLATE_ROUNDS, p, basis)
    tdem_raw = []
    for prob, fault, tag in enumerate_faults(tcirc):
        dets, logical = propagate_fault(tcirc, fault)
        tdem_raw.append((prob, dets, logical, tag))

    tmeta = [(det.basis, det.layer, det.pos) for det in tcirc.detectors]
    t_id, s = _detector_id_map(d, _TEMPLATE_ROUNDS, basis)
    big_id, _ = _detector_id_map(d, rounds, basis)

    def shift(dets, delta):
        out = []
        for i in dets:
            b, layer, pos = tmeta[i]
            out.append(big_id(b, layer + delta) + pos)
        return frozenset(out)

    sigs = []
    n_bulk_shifts = rounds - _TEMPLATE_ROUNDS   # bulk slot lands on 5..N-4
    for prob, dets, logical, tag in tdem_raw:
        if tag <= _HEAD:
            deltas = (0,)
        elif tag == _BULK_SLOT:
            deltas = range(0, n_bulk_shifts + 1)
        else:
            deltas = (rounds - _TEMPLATE_ROUNDS,)
        for delta in deltas:
            sigs.append((prob, shift(dets, delta), logical))

    bcirc_meta = _memory_detector_meta(d, rounds, basis)
    return DetectorModel(d, rounds, basis, p, bcirc_meta, merge_mechanisms(sigs))


def _memory_detector_meta(d: int, rounds: int, basis: str):
    layout = cached_layout(d)
    match_stabs = layout.stabilizers_of(basis)
    other = 'X' if basis == 'Z' else 'Z'
    other_stabs = layout.stabilizers_of(other)
    meta = []
    for layer in range(1, rounds + 2):
        for pos, s in enumerate(match_stabs):
            meta.append((basis, layer, pos, s.plaquette))
        if 2 <= layer <= rounds:
            for pos, s in enumerate(other_stabs):
                meta.append((other, layer, pos, s.plaquette))
    return tuple(meta)


_layout_cache = {}


def cached_layout(d: int):
    if d not in _layout_cache:
        _layout_cache[d] = build_rotated_surface_code(d)
    return _layout_cache[d]


# ---------------------------------------------------------------------------
# Text serialization: "error(p) D3 D7 L" plus a detector coordinate map.

def dem_to_text(dem: DetectorModel) -> str:
    lines = ["# windec dem v1",
             f"distance {dem.distance}",
             f"rounds {dem.rounds}",
             f"basis {dem.basis}",
             f"p {dem.p!r}",
             f"detectors {dem.num_detectors}"]
    for i, (b, layer, pos, plaq) in enumerate(dem.detectors):
        lines.append(f"detector D{i} {b} {layer} {pos} {plaq[0]} {plaq[1]}")
    for m in dem.mechanisms:
        parts = [f"error({m.prob!r})"] + [f"D{i}" for i in m.detectors]
        if m.logical:
            parts.append("L")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def dem_from_text(text: str) -> DetectorModel:
    header = {}
    detectors = {}
    mechanisms = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        if parts[0] == 'detector':
            i = int(parts[1][1:])
            detectors[i] = (parts[2], int(parts[3]), int(parts[4]),
                            (int(parts[5]), int(parts[6])))
        elif parts[0].startswith('error('):
            prob = float(parts[0][6:-1])
            dets = tuple(int(t[1:]) for t in parts[1:] if t.startswith('D'))
            logical = 1 if parts[-1] == 'L' else 0
            mechanisms.append(Mechanism(prob, dets, logical))
        else:
            header[parts[0]] = parts[1]
    n = int(header['detectors'])
    det_meta = tuple(detectors[i] for i in range(n))
    return DetectorModel(int(header['distance']), int(header['rounds']),
                         header['basis'], float(header['p']), det_meta,
                         tuple(mechanisms))
