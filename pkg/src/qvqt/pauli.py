"""Pauli strings and real-weighted Pauli sums.

Qubit ``q`` is bit ``q`` of the computational-basis index (qubit 0 is the
least significant bit). A Pauli string acts on a basis state as a bit flip
followed by a phase, which is how every kernel in the package applies it.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

DENSE_QUBIT_CAP = 14
DROP_TOL = 1e-12

_PAULI_LETTERS = ("X", "Y", "Z")


class ResourceError(RuntimeError):
    """Requested object would exceed the configured size cap."""


@dataclass(frozen=True, order=True)
class PauliString:
    """Tensor product of single-qubit Paulis; identity on unlisted qubits."""

    width: int
    ops: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        ops = tuple(sorted((int(q), str(p)) for q, p in self.ops))
        seen = set()
        for q, p in ops:
            if p not in _PAULI_LETTERS:
                raise ValueError(f"unknown Pauli letter {p!r}")
            if not 0 <= q < self.width:
                raise ValueError(f"qubit {q} out of range for width {self.width}")
            if q in seen:
                raise ValueError(f"duplicate qubit {q} in Pauli string")
            seen.add(q)
        object.__setattr__(self, "ops", ops)

    @classmethod
    def from_dict(cls, width: int, ops: Mapping[int, str]) -> "PauliString":
        return cls(width, tuple(ops.items()))

    @classmethod
    def identity(cls, width: int) -> "PauliString":
        return cls(width, ())

    @property
    def is_identity(self) -> bool:
        return not self.ops

    @property
    def flip_mask(self) -> int:
        return sum(1 << q for q, p in self.ops if p in "XY")

    @property
    def sign_mask(self) -> int:
        return sum(1 << q for q, p in self.ops if p in "YZ")

    @property
    def n_y(self) -> int:
        return sum(1 for _, p in self.ops if p == "Y")

    @property
    def is_diagonal(self) -> bool:
        return self.flip_mask == 0

    def phases(self) -> np.ndarray:
        """Phase vector ``ph`` with ``(P psi)[c] = ph[c] * psi[c ^ flip_mask]``.

        ``P|b> = i**n_y * (-1)**popcount(b & sign_mask) |b ^ flip_mask>``.
        """
        dim = 1 << self.width
        source = np.arange(dim, dtype=np.int64) ^ self.flip_mask
        parity = _popcount_parity(source & self.sign_mask)
        return (1j ** self.n_y) * (1.0 - 2.0 * parity)

    def label(self) -> str:
        if not self.ops:
            return "I"
        return " ".join(f"{p}{q}" for q, p in self.ops)

    def __str__(self) -> str:
        return self.label()


def _popcount_parity(values: np.ndarray) -> np.ndarray:
    parity = np.zeros_like(values)
    v = values.copy()
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return parity


@dataclass(frozen=True)
class PauliSum:
    """Sum of real-weighted Pauli strings on ``width`` qubits."""

    width: int
    terms: tuple[tuple[float, PauliString], ...] = field(default=())

    def __post_init__(self):
        for _, s in self.terms:
            if s.width != self.width:
                raise ValueError("term width does not match sum width")

    @classmethod
    def from_terms(cls, width: int, terms: Iterable[tuple[float, PauliString]]) -> "PauliSum":
        return cls(width, tuple((float(c), s) for c, s in terms)).simplify()

    @classmethod
    def zero(cls, width: int) -> "PauliSum":
        return cls(width, ())

    def simplify(self, tol: float = DROP_TOL) -> "PauliSum":
        """Merge equal strings, drop weights below ``tol``, sort canonically."""
        acc: dict[PauliString, float] = defaultdict(float)
        for c, s in self.terms:
            acc[s] += c
        kept = [(c, s) for s, c in acc.items() if abs(c) > tol]
        kept.sort(key=lambda t: (len(t[1].ops), t[1].ops))
        return PauliSum(self.width, tuple(kept))

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        if other.width != self.width:
            raise ValueError("cannot add Pauli sums of different width")
        return PauliSum(self.width, self.terms + other.terms).simplify()

    def __mul__(self, scalar: float) -> "PauliSum":
        return PauliSum(self.width, tuple((scalar * c, s) for c, s in self.terms)).simplify()

    __rmul__ = __mul__

    def __len__(self) -> int:
        return len(self.terms)

    def identity_weight(self) -> float:
        return sum(c for c, s in self.terms if s.is_identity)

    def coefficient(self, string: PauliString) -> float:
        return sum(c for c, s in self.terms if s == string)

    def grouped(self) -> list[tuple[int, np.ndarray]]:
        """Terms collapsed per flip mask into ``(flip_mask, phase_vector)`` pairs."""
        groups: dict[int, np.ndarray] = {}
        for c, s in self.terms:
            ph = c * s.phases()
            mask = s.flip_mask
            groups[mask] = groups[mask] + ph if mask in groups else ph
        return sorted(groups.items())

    def dump(self) -> str:
        """One term per line: ``<coefficient> <ops>``."""
        return "".join(f"{c:.17g} {s.label()}\n" for c, s in self.terms)

    @classmethod
    def parse(cls, width: int, text: str) -> "PauliSum":
        terms = []
        for line in text.splitlines():
            if not line.strip():
                continue
            coeff, *ops = line.split()
            parsed = [] if ops == ["I"] else [(int(o[1:]), o[0]) for o in ops]
            terms.append((float(coeff), PauliString(width, tuple(parsed))))
        return cls(width, tuple(terms))


def to_dense_matrix(op: PauliSum, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    if op.width > cap:
        raise ResourceError(f"{op.width} qubits exceeds dense cap of {cap}")
    dim = 1 << op.width
    mat = np.zeros((dim, dim), dtype=complex)
    rows = np.arange(dim)
    for mask, ph in op.grouped():
        mat[rows, rows ^ mask] += ph
    return mat
