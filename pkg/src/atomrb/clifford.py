"""The 24-element single-qubit Clifford group and RB recovery gates.

Elements are identified by their Pauli frame: the signed axis each of
X, Y, Z is sent to under conjugation. Composition and inversion are done
on frames (integer lookups); the unitaries are kept for simulation and for
cross-checking.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .qubit import PAULIS, SIGMA_I, make_rotation, same_up_to_phase

N_CLIFFORDS = 24

# Signed axis codes: 0,1,2 = +x,+y,+z and 3,4,5 = -x,-y,-z. With this code the
# identity frame (0, 1, 2) sorts first, so it lands on index 0.
_AXIS_NAMES = ("+x", "+y", "+z", "-x", "-y", "-z")


class CliffordError(RuntimeError):
    pass


def pauli_frame(u: np.ndarray, tol: float = 1e-10) -> tuple[int, int, int]:
    """Signed-axis images of X, Y, Z under ``P -> u P u^+``."""
    frame = []
    for p in PAULIS:
        image = u @ p @ u.conj().T
        for code in range(6):
            sign = 1 if code < 3 else -1
            if np.max(np.abs(image - sign * PAULIS[code % 3])) <= tol:
                frame.append(code)
                break
        else:
            raise CliffordError("unitary does not map Paulis to signed Paulis")
    return tuple(frame)


def frame_matrix(frame: Sequence[int]) -> np.ndarray:
    """3x3 signed permutation matrix acting on Bloch vectors."""
    m = np.zeros((3, 3), dtype=int)
    for col, code in enumerate(frame):
        m[code % 3, col] = 1 if code < 3 else -1
    return m


def frame_from_matrix(m: np.ndarray) -> tuple[int, int, int]:
    frame = []
    for col in range(3):
        row = int(np.flatnonzero(m[:, col])[0])
        frame.append(row if m[row, col] > 0 else row + 3)
    return tuple(frame)


def frame_label(frame: Sequence[int]) -> str:
    return " ".join(f"{p}->{_AXIS_NAMES[c]}" for p, c in zip("XYZ", frame))


@dataclass(frozen=True)
class CliffordElement:
    index: int
    unitary: np.ndarray = field(repr=False, compare=False)
    pauli_action: tuple[int, int, int]

    @property
    def bloch_matrix(self) -> np.ndarray:
        return frame_matrix(self.pauli_action)


@dataclass(frozen=True)
class CliffordTable:
    elements: tuple[CliffordElement, ...]
    product: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, index: int) -> CliffordElement:
        return self.elements[index]

    @property
    def unitaries(self) -> np.ndarray:
        return np.stack([e.unitary for e in self.elements])

    def compose(self, a: int, b: int) -> int:
        """Index of U_a U_b (b acts first)."""
        return int(self.product[a, b])

    def index_of(self, u: np.ndarray) -> int:
        frame = pauli_frame(u)
        for e in self.elements:
            if e.pauli_action == frame:
                return e.index
        raise CliffordError("unitary is not a Clifford")

    def net_element(self, sequence: Iterable[int]) -> int:
        net = 0
        product = self.product
        for g in sequence:
            net = product[g, net]
        return int(net)

    def recovery_gate(self, sequence: Iterable[int]) -> int:
        """Clifford that undoes ``sequence`` (applied in list order).

        Uses only integer table lookups, so cost is linear in the length.
        """
        return int(self.inverse[self.net_element(sequence)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["a"] + [f"b{j}" for j in range(len(self))])
            for i, row in enumerate(self.product):
                writer.writerow([i] + [int(x) for x in row])


def _closure(generators: Sequence[np.ndarray], limit: int = 64) -> list[np.ndarray]:
    group = [SIGMA_I.copy()]
    frontier = [SIGMA_I.copy()]
    while frontier:
        new = []
        for g in frontier:
            for h in generators:
                p = h @ g
                if not any(same_up_to_phase(p, q) for q in group):
                    group.append(p)
                    new.append(p)
        if len(group) > limit:
            raise CliffordError("group closure did not terminate")
        frontier = new
    return group


@functools.lru_cache(maxsize=None)
def generate_group() -> CliffordTable:
    """Build the Clifford table from R_x(pi/2) and R_y(pi/2).

    Elements are ordered by their Pauli frame, which puts the identity at
    index 0 and makes indices reproducible.
    """
    gens = [make_rotation(0.0, np.pi / 2), make_rotation(np.pi / 2, np.pi / 2)]
    group = _closure(gens)
    if len(group) != N_CLIFFORDS:
        raise CliffordError(f"closure produced {len(group)} elements, expected 24")

    framed = sorted(((pauli_frame(u), u) for u in group), key=lambda fu: fu[0])
    elements = tuple(
        CliffordElement(index=i, unitary=u, pauli_action=frame)
        for i, (frame, u) in enumerate(framed)
    )
    lookup = {e.pauli_action: e.index for e in elements}
    mats = [frame_matrix(e.pauli_action) for e in elements]

    product = np.empty((N_CLIFFORDS, N_CLIFFORDS), dtype=np.int64)
    for a in range(N_CLIFFORDS):
        for b in range(N_CLIFFORDS):
            product[a, b] = lookup[frame_from_matrix(mats[a] @ mats[b])]
    inverse = np.array([int(np.flatnonzero(row == 0)[0]) for row in product])

    product.setflags(write=False)
    inverse.setflags(write=False)
    return CliffordTable(elements=elements, product=product, inverse=inverse)


def random_sequence(rng: np.random.Generator, length: int) -> np.ndarray:
    return rng.integers(0, N_CLIFFORDS, size=length)
