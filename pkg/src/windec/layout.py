"""Rotated surface-code lattice: qubit placement, stabilizers, logical operators.

Coordinate conventions used throughout the package:

* Data qubits live on the integer grid ``(row, col)`` with ``row, col in [0, d)``.
* Each stabilizer plaquette is named by its top-left corner ``(r, c)`` with
  ``r, c in [-1, d-1]``; its (up to four) data qubits are the corners
  ``(r, c), (r, c+1), (r+1, c), (r+1, c+1)`` that fall on the grid.
* A plaquette is X-type iff ``(r + c)`` is even, Z-type otherwise.  X-type
  boundary plaquettes sit on the top/bottom rows, Z-type on the left/right
  columns; plaquettes of the wrong type for their boundary do not exist.
* Logical Z is the top data row, logical X the left data column.  They cross
  the boundaries hosting their own stabilizer type and intersect in the single
  qubit ``(0, 0)``.
* The ``(d+1) x (d+1)`` stabilizer slot grid maps plaquette ``(r, c)`` to slot
  ``(r+1, c+1)``.  Every plaquette, existing or not, has a unique slot; for
  ``d = 3`` that is 16 slots of which 8 are ever occupied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

Coord = tuple[int, int]

# Corner visit order per CNOT layer.  X ancillas sweep their corners in a
# Z-shaped pattern, Z ancillas in an N-shaped pattern.  Mid-schedule hook
# residues are then row pairs (X) / column pairs (Z), perpendicular to the
# logical operator each error type threatens, and no data qubit is touched
# twice in one layer.
_X_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))
_Z_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))


class Stabilizer(NamedTuple):
    basis: str                  # 'X' or 'Z'
    plaquette: Coord            # top-left corner (r, c)
    data: tuple                 # 4 entries in CNOT-layer order, None = skipped layer


def plaquette_type(r: int, c: int) -> str:
    return 'X' if (r + c) % 2 == 0 else 'Z'


def _plaquette_exists(r: int, c: int, d: int) -> bool:
    interior = 0 <= r <= d - 2 and 0 <= c <= d - 2
    if interior:
        return True
    kind = plaquette_type(r, c)
    if r in (-1, d - 1) and 0 <= c <= d - 2:
        return kind == 'X'      # top/bottom boundary rows host X checks
    if c in (-1, d - 1) and 0 <= r <= d - 2:
        return kind == 'Z'      # left/right boundary columns host Z checks
    return False


@dataclass(frozen=True)
class CodeLayout:
    """Static description of one rotated surface code patch."""

    distance: int
    data_qubits: tuple
    stabilizers: tuple
    logical_z_support: frozenset
    logical_x_support: frozenset
    qubit_index: dict = field(compare=False)

    @property
    def x_stabilizers(self):
        return tuple(s for s in self.stabilizers if s.basis == 'X')

    @property
    def z_stabilizers(self):
        return tuple(s for s in self.stabilizers if s.basis == 'Z')

    def stabilizers_of(self, basis: str):
        return tuple(s for s in self.stabilizers if s.basis == basis)

    def slot(self, plaquette: Coord) -> Coord:
        """Map a plaquette to its cell in the (d+1) x (d+1) slot grid."""
        r, c = plaquette
        return (r + 1, c + 1)

    def logical_support(self, basis: str) -> frozenset:
        return self.logical_z_support if basis == 'Z' else self.logical_x_support


def build_rotated_surface_code(d: int) -> CodeLayout:
    """Construct the distance-``d`` rotated surface code layout.

    Parameters
    ----------
    d : int
        Code distance, odd and >= 3.

    Returns
    -------
    CodeLayout
        Frozen layout with ``d**2`` data qubits and ``(d**2 - 1) / 2``
        stabilizers per basis.  Stabilizer data tuples are ordered by CNOT
        layer; corners outside the grid appear as None so the schedule keeps
        its four-layer shape for weight-2 checks.
    """
    if d < 3 or d % 2 == 0:
        raise ValueError("distance must be odd and >= 3")

    data = tuple((r, c) for r in range(d) for c in range(d))
    data_set = set(data)

    stabs = []
    for r in range(-1, d):
        for c in range(-1, d):
            if not _plaquette_exists(r, c, d):
                continue
            kind = plaquette_type(r, c)
            order = _X_ORDER if kind == 'X' else _Z_ORDER
            corners = tuple(
                (r + dr, c + dc) if (r + dr, c + dc) in data_set else None
                for dr, dc in order
            )
            stabs.append(Stabilizer(kind, (r, c), corners))
    # Stable ordering: basis, then plaquette coordinates.
    stabs.sort(key=lambda s: (s.basis, s.plaquette))
    stabs = tuple(stabs)

    logical_z = frozenset((0, c) for c in range(d))
    logical_x = frozenset((r, 0) for r in range(d))

    qubit_index = {q: i for i, q in enumerate(data)}
    for s in stabs:
        qubit_index[('anc', s.plaquette)] = len(qubit_index)

    layout = CodeLayout(d, data, stabs, logical_z, logical_x, qubit_index)
    _check_layout(layout)
    return layout


def _check_layout(layout: CodeLayout) -> None:
    d = layout.distance
    xs, zs = layout.x_stabilizers, layout.z_stabilizers
    assert len(layout.data_qubits) == d * d
    assert len(xs) == (d * d - 1) // 2
    assert len(zs) == (d * d - 1) // 2

    # Stabilizers pairwise commute: opposite-type supports overlap evenly.
    for sx in xs:
        supx = {q for q in sx.data if q is not None}
        assert len(supx) in (2, 4)
        for sz in zs:
            supz = {q for q in sz.data if q is not None}
            assert len(supx & supz) % 2 == 0

    # Logical operators commute with the opposite-type checks and overlap in
    # exactly one data qubit.
    for s in xs:
        sup = {q for q in s.data if q is not None}
        assert len(sup & layout.logical_z_support) % 2 == 0
    for s in zs:
        sup = {q for q in s.data if q is not None}
        assert len(sup & layout.logical_x_support) % 2 == 0
    assert len(layout.logical_z_support & layout.logical_x_support) == 1

    # Schedule consistency: within each CNOT layer no qubit appears twice.
    for layer in range(4):
        busy = set()
        for s in layout.stabilizers:
            q = s.data[layer]
            if q is None:
                continue
            assert q not in busy, (layer, q)
            busy.add(q)
            anc = ('anc', s.plaquette)
            assert anc not in busy
            busy.add(anc)

    # Slot map is injective over existing plaquettes and lands in-range.
    slots = {layout.slot(s.plaquette) for s in layout.stabilizers}
    assert len(slots) == len(layout.stabilizers)
    assert all(0 <= a <= d and 0 <= b <= d for a, b in slots)
