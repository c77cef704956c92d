"""Memory-experiment circuit construction under circuit-level noise.

A circuit is a flat list of vectorized operation layers plus detector and
observable definitions over absolute measurement indices.  The noise model:

* every reset flips the prepared state with probability p,
* every measurement outcome flips with probability p,
* every CNOT is followed by a two-qubit depolarizing channel of strength p,
* qubits not participating in a CNOT layer idle under one-qubit depolarizing
  noise of strength p (these are exactly the boundary-adjacent qubits),
* every data qubit idles twice, again at strength p, while the ancillas are
  measured and reset between rounds.

Hadamard layers are noiseless and insert no idles.

Detector layers for the memory basis run 1..N+1: layer 1 compares the first
ancilla round against the deterministic initialization, layers 2..N compare
consecutive ancilla rounds, and layer N+1 compares the stabilizer values
reconstructed from the transversal data readout against the final ancilla
round.  The opposite basis contributes layers 2..N only, since its first
round outcomes are unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layout import CodeLayout, build_rotated_surface_code


@dataclass
class Op:
    kind: str                   # R, H, CX, M, XERR, ZERR, DEP1, DEP2
    q1: np.ndarray              # qubit ids; controls for CX/DEP2
    q2: np.ndarray = None       # targets for CX/DEP2
    prob: float = 0.0           # flip/depolarizing strength where applicable
    meas_base: int = -1         # first measurement index for M ops


@dataclass(frozen=True)
class Detector:
    basis: str
    layer: int                  # 1-based detection-event slice
    pos: int                    # index within this basis' stabilizer ordering
    plaquette: tuple
    meas: tuple                 # absolute measurement indices


@dataclass
class CliffordCircuit:
    layout: CodeLayout
    basis: str
    rounds: int
    p: float
    n_qubits: int
    qubit_coords: list
    ops: list
    detectors: list
    observable: tuple = ()
    num_meas: int = 0
    _det_index: dict = field(default_factory=dict, repr=False)

    def detector_id(self, basis: str, layer: int, pos: int) -> int:
        if not self._det_index:
            for i, det in enumerate(self.detectors):
                self._det_index[(det.basis, det.layer, det.pos)] = i
        return self._det_index[(basis, layer, pos)]

    def detector_count(self, basis: str = None) -> int:
        if basis is None:
            return len(self.detectors)
        return sum(1 for d in self.detectors if d.basis == basis)

    def basis_detector_ids(self, basis: str) -> np.ndarray:
        return np.array([i for i, d in enumerate(self.detectors) if d.basis == basis],
                        dtype=np.int64)


def build_memory_circuit(d: int, rounds: int, p: float, basis: str = 'Z',
                         layout: CodeLayout = None) -> CliffordCircuit:
    """Build the d x d memory experiment with N syndrome extraction rounds.

    Parameters
    ----------
    d : int
        Code distance.
    rounds : int
        Number of ancilla measurement rounds N, >= 1.
    p : float
        Physical error strength; every noisy location uses the same p.
    basis : str
        'Z' or 'X'; the basis the logical qubit is stored and read out in.

    Returns
    -------
    CliffordCircuit
    """
    if basis not in ('Z', 'X'):
        raise ValueError("basis must be 'Z' or 'X'")
    if rounds < 1:
        raise ValueError("need at least one round")
    layout = layout or build_rotated_surface_code(d)
    N = rounds

    data_ids = np.arange(d * d, dtype=np.int32)
    coords = list(layout.data_qubits)
    anc_id = {}
    for s in layout.stabilizers:
        anc_id[s.plaquette] = len(coords)
        coords.append(('anc', s.basis, s.plaquette))
    n = len(coords)
    all_anc = np.array(sorted(anc_id.values()), dtype=np.int32)
    x_anc = np.array([anc_id[s.plaquette] for s in layout.x_stabilizers], dtype=np.int32)

    ops: list[Op] = []
    num_meas = 0
    meas_of = {}                # (round, ancilla id) -> measurement index

    def emit(kind, q1, q2=None, prob=0.0):
        ops.append(Op(kind, np.asarray(q1, dtype=np.int32),
                      None if q2 is None else np.asarray(q2, dtype=np.int32), prob))

    def emit_measure(qubits, tag):
        nonlocal num_meas
        qs = np.asarray(qubits, dtype=np.int32)
        ops.append(Op('M', qs, prob=p, meas_base=num_meas))
        for k, q in enumerate(qs):
            meas_of[(tag, int(q))] = num_meas + k
        num_meas += len(qs)

    # CNOT layer schedule, fixed across rounds.
    cnot_layers = []
    for layer in range(4):
        ctrl, tgt = [], []
        for s in layout.stabilizers:
            q = s.data[layer]
            if q is None:
                continue
            a = anc_id[s.plaquette]
            dq = layout.qubit_index[q]
            if s.basis == 'X':
                ctrl.append(a); tgt.append(dq)
            else:
                ctrl.append(dq); tgt.append(a)
        busy = np.array(sorted(ctrl + tgt), dtype=np.int32)
        idle = np.setdiff1d(np.arange(n, dtype=np.int32), busy)
        cnot_layers.append((np.array(ctrl, dtype=np.int32),
                            np.array(tgt, dtype=np.int32), idle))

    for r in range(1, N + 1):
        # Reset phase: ancillas every round, data only in round 1.
        if r == 1:
            emit('R', np.arange(n))
            emit('XERR', np.arange(n), prob=p)
            if basis == 'X':
                emit('H', data_ids)
            emit('H', x_anc)
        else:
            emit('R', all_anc)
            emit('XERR', all_anc, prob=p)
            emit('H', x_anc)
        for ctrl, tgt, idle in cnot_layers:
            emit('CX', ctrl, tgt)
            emit('DEP2', ctrl, tgt, prob=p)
            if len(idle):
                emit('DEP1', idle, prob=p)
        emit('H', x_anc)
        emit_measure(all_anc, ('anc', r))
        if r < N:
            # Data wait out the measure+reset pipeline.
            emit('DEP1', data_ids, prob=p)
            emit('DEP1', data_ids, prob=p)

    # Transversal readout in the memory basis, concurrent with the final
    # ancilla measurement: no extra idles.
    if basis == 'X':
        emit('H', data_ids)
    emit_measure(data_ids, 'final')

    # Detector definitions.
    match_stabs = layout.stabilizers_of(basis)
    other_basis = 'X' if basis == 'Z' else 'Z'
    other_stabs = layout.stabilizers_of(other_basis)

    detectors = []
    for layer in range(1, N + 2):
        if layer <= N:
            for pos, s in enumerate(match_stabs):
                a = anc_id[s.plaquette]
                meas = [meas_of[(('anc', layer), a)]]
                if layer > 1:
                    meas.append(meas_of[(('anc', layer - 1), a)])
                detectors.append(Detector(basis, layer, pos, s.plaquette, tuple(meas)))
        else:
            for pos, s in enumerate(match_stabs):
                a = anc_id[s.plaquette]
                meas = [meas_of[('final', layout.qubit_index[q])]
                        for q in s.data if q is not None]
                meas.append(meas_of[(('anc', N), a)])
                detectors.append(Detector(basis, layer, pos, s.plaquette, tuple(meas)))
        if 2 <= layer <= N:
            for pos, s in enumerate(other_stabs):
                a = anc_id[s.plaquette]
                meas = [meas_of[(('anc', layer), a)], meas_of[(('anc', layer - 1), a)]]
                detectors.append(Detector(other_basis, layer, pos, s.plaquette, tuple(meas)))

    support = sorted(layout.logical_support(basis))
    observable = tuple(meas_of[('final', layout.qubit_index[q])] for q in support)

    circ = CliffordCircuit(layout, basis, N, p, n, coords, ops, detectors,
                           observable, num_meas)
    _check_circuit(circ)
    return circ


def _check_circuit(circ: CliffordCircuit) -> None:
    d = circ.layout.distance
    N = circ.rounds
    s = (d * d - 1) // 2
    assert circ.detector_count(circ.basis) == s * (N + 1)
    other = 'X' if circ.basis == 'Z' else 'Z'
    assert circ.detector_count(other) == s * max(0, N - 1)
    # Each measurement feeds at most two detectors, plus possibly the observable.
    use = {}
    for det in circ.detectors:
        for m in det.meas:
            use[m] = use.get(m, 0) + 1
    assert all(v <= 2 for v in use.values())


# ---------------------------------------------------------------------------
# Line-oriented serialization.

def circuit_to_text(circ: CliffordCircuit) -> str:
    lines = ["# windec circuit v1",
             f"distance {circ.layout.distance}",
             f"rounds {circ.rounds}",
             f"basis {circ.basis}",
             f"p {circ.p!r}",
             f"qubits {circ.n_qubits}"]
    for op in circ.ops:
        if op.kind == 'CX' or op.kind == 'DEP2':
            pairs = " ".join(f"{c} {t}" for c, t in zip(op.q1, op.q2))
            head = op.kind if op.kind == 'CX' else f"DEP2 {op.prob!r}"
            lines.append(f"op {head} {pairs}")
        elif op.kind == 'M':
            lines.append(f"op M {op.prob!r} {op.meas_base} " +
                         " ".join(str(q) for q in op.q1))
        elif op.kind in ('XERR', 'ZERR', 'DEP1'):
            lines.append(f"op {op.kind} {op.prob!r} " +
                         " ".join(str(q) for q in op.q1))
        else:
            lines.append(f"op {op.kind} " + " ".join(str(q) for q in op.q1))
    for det in circ.detectors:
        r, c = det.plaquette
        lines.append(f"detector {det.basis} {det.layer} {det.pos} {r} {c} " +
                     " ".join(str(m) for m in det.meas))
    lines.append("observable " + " ".join(str(m) for m in circ.observable))
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str, layout: CodeLayout = None) -> CliffordCircuit:
    header = {}
    ops, detectors, observable = [], [], ()
    num_meas = 0
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        if parts[0] == 'op':
            kind = parts[1]
            if kind in ('CX', 'DEP2'):
                if kind == 'DEP2':
                    prob, rest = float(parts[2]), parts[3:]
                else:
                    prob, rest = 0.0, parts[2:]
                qs = np.array(rest, dtype=np.int32)
                ops.append(Op(kind, qs[0::2], qs[1::2], prob))
            elif kind == 'M':
                prob = float(parts[2]); base = int(parts[3])
                qs = np.array(parts[4:], dtype=np.int32)
                ops.append(Op('M', qs, prob=prob, meas_base=base))
                num_meas = max(num_meas, base + len(qs))
            elif kind in ('XERR', 'ZERR', 'DEP1'):
                ops.append(Op(kind, np.array(parts[3:], dtype=np.int32),
                              prob=float(parts[2])))
            else:
                ops.append(Op(kind, np.array(parts[2:], dtype=np.int32)))
        elif parts[0] == 'detector':
            detectors.append(Detector(parts[1], int(parts[2]), int(parts[3]),
                                      (int(parts[4]), int(parts[5])),
                                      tuple(int(m) for m in parts[6:])))
        elif parts[0] == 'observable':
            observable = tuple(int(m) for m in parts[1:])
        else:
            header[parts[0]] = parts[1]
    d = int(header['distance'])
    layout = layout or build_rotated_surface_code(d)
    coords = list(layout.data_qubits) + [
        ('anc', s.basis, s.plaquette) for s in layout.stabilizers]
    return CliffordCircuit(layout, header['basis'], int(header['rounds']),
                           float(header['p']), int(header['qubits']), coords,
                           ops, detectors, observable, num_meas)
