"""Direct Monte-Carlo simulation of memory circuits.

Pauli-frame simulation vectorized over shots: every noisy location samples its
error, frames propagate through the Clifford layers, and detector events are
the accumulated outcome flips.  This is the validation oracle for the detector
error model pipeline; it shares only the circuit data structure with it, not
the fault enumeration or merging logic.

All detectors and the observable are deterministic in the noiseless circuit,
so events are exactly the frame-induced flips; the unconstrained first-round
outcomes of the non-memory basis never enter a detector.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix

from .circuit import CliffordCircuit


def _detector_matrix(circ: CliffordCircuit) -> csr_matrix:
    rows, cols = [], []
    for i, det in enumerate(circ.detectors):
        for m in det.meas:
            rows.append(i); cols.append(m)
    data = np.ones(len(rows), dtype=np.uint8)
    return csr_matrix((data, (rows, cols)),
                      shape=(len(circ.detectors), circ.num_meas))


def simulate_circuit(circ: CliffordCircuit, shots: int, seed: int,
                     noisy: bool = True):
    """Sample detector events and observable flips from the circuit.

    Returns
    -------
    events : uint8 array (shots, n_detectors)
    obs : uint8 array (shots,)
    """
    rng = np.random.default_rng(seed)
    n = circ.n_qubits
    x = np.zeros((shots, n), dtype=np.uint8)
    z = np.zeros((shots, n), dtype=np.uint8)
    flips = np.zeros((shots, circ.num_meas), dtype=np.uint8)

    for op in circ.ops:
        q = op.q1
        if op.kind == 'R':
            x[:, q] = 0
            z[:, q] = 0
        elif op.kind == 'H':
            tmp = x[:, q].copy()
            x[:, q] = z[:, q]
            z[:, q] = tmp
        elif op.kind == 'CX':
            x[:, op.q2] ^= x[:, q]
            z[:, q] ^= z[:, op.q2]
        elif op.kind == 'M':
            col = flips[:, op.meas_base:op.meas_base + len(q)]
            col ^= x[:, q]
            if noisy and op.prob > 0:
                col ^= (rng.random((shots, len(q))) < op.prob).astype(np.uint8)
        elif op.kind == 'XERR':
            if noisy and op.prob > 0:
                x[:, q] ^= (rng.random((shots, len(q))) < op.prob).astype(np.uint8)
        elif op.kind == 'ZERR':
            if noisy and op.prob > 0:
                z[:, q] ^= (rng.random((shots, len(q))) < op.prob).astype(np.uint8)
        elif op.kind == 'DEP1':
            if noisy and op.prob > 0:
                fire = rng.random((shots, len(q))) < op.prob
                which = rng.integers(0, 3, size=(shots, len(q)))
                x[:, q] ^= (fire & (which != 2)).astype(np.uint8)
                z[:, q] ^= (fire & (which != 0)).astype(np.uint8)
        elif op.kind == 'DEP2':
            if noisy and op.prob > 0:
                t = op.q2
                fire = rng.random((shots, len(q))) < op.prob
                which = rng.integers(0, 15, size=(shots, len(q))) + 1
                pa, pb = which // 4, which % 4       # 0:I 1:X 2:Y 3:Z
                x[:, q] ^= (fire & ((pa == 1) | (pa == 2))).astype(np.uint8)
                z[:, q] ^= (fire & ((pa == 2) | (pa == 3))).astype(np.uint8)
                x[:, t] ^= (fire & ((pb == 1) | (pb == 2))).astype(np.uint8)
                z[:, t] ^= (fire & ((pb == 2) | (pb == 3))).astype(np.uint8)
        else:
            raise ValueError(f"unknown op {op.kind}")

    A = _detector_matrix(circ)
    events = np.asarray((A @ flips.T).T % 2, dtype=np.uint8)
    obs = flips[:, list(circ.observable)].sum(axis=1).astype(np.uint8) % 2
    return events, obs
