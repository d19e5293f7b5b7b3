"""Fermi-Hubbard chain: qubit Hamiltonian, fermionic brute-force oracle, number operator.

Layout is spin-major: qubits ``[0, N)`` hold spin-up sites, ``[N, 2N)`` spin-down.
Occupation follows the Jordan-Wigner form ``c_j^dag = prod_{k<j}(-Z_k) S^+_j``
with ``S^+ = (X + iY)/2 = |0><1|``, so qubit state ``|0>`` is an occupied mode
and ``n = (1 + Z)/2``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from qvqt.pauli import PauliString, PauliSum, ResourceError

ORACLE_QUBIT_CAP = 12

UP, DOWN = 0, 1


@dataclass(frozen=True)
class HubbardConfig:
    n_sites: int
    t: float = 1.0
    u: float = 0.8
    mu: float = 0.2
    boundary: str = "periodic"

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.boundary == "periodic" and self.n_sites == 1:
            raise ValueError("periodic boundary needs at least two sites")

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    def qubit(self, site: int, spin: int) -> int:
        return spin * self.n_sites + site

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour site pairs. A two-site ring has a single distinct bond."""
        pairs = [(i, i + 1) for i in range(self.n_sites - 1)]
        if self.boundary == "periodic" and self.n_sites >= 3:
            pairs.append((self.n_sites - 1, 0))
        return pairs

    def replace(self, **changes) -> "HubbardConfig":
        return HubbardConfig(**{**asdict(self), **changes})


def _hopping_terms(config: HubbardConfig) -> list[tuple[float, PauliString]]:
    n_q = config.n_qubits
    terms = []
    for spin in (UP, DOWN):
        for i, j in config.bonds():
            a, b = sorted((config.qubit(i, spin), config.qubit(j, spin)))
            between = list(range(a + 1, b))
            # each (-Z_k) in the string contributes one sign
            coeff = -0.5 * config.t * (-1) ** len(between)
            zs = [(k, "Z") for k in between]
            for p in ("X", "Y"):
                terms.append((coeff, PauliString(n_q, tuple([(a, p), (b, p)] + zs))))
    return terms


def build_hamiltonian(config: HubbardConfig) -> PauliSum:
    n_q = config.n_qubits
    terms = _hopping_terms(config)
    identity = PauliString.identity(n_q)
    quarter_u = config.u / 4
    for i in range(config.n_sites):
        up, dn = config.qubit(i, UP), config.qubit(i, DOWN)
        terms += [
            (quarter_u, PauliString(n_q, ((up, "Z"), (dn, "Z")))),
            (quarter_u, PauliString(n_q, ((up, "Z"),))),
            (quarter_u, PauliString(n_q, ((dn, "Z"),))),
            (quarter_u, identity),
        ]
        for q in (up, dn):
            terms += [
                (-config.mu / 2, PauliString(n_q, ((q, "Z"),))),
                (-config.mu / 2, identity),
            ]
    return PauliSum.from_terms(n_q, terms)


def number_operator(config: HubbardConfig) -> PauliSum:
    n_q = config.n_qubits
    terms = [(0.5, PauliString.identity(n_q))] * n_q
    terms += [(0.5, PauliString(n_q, ((q, "Z"),))) for q in range(n_q)]
    return PauliSum.from_terms(n_q, terms)


def occupation_counts(n_qubits: int) -> np.ndarray:
    """Particle number of each computational basis state (count of ``|0>`` qubits)."""
    idx = np.arange(1 << n_qubits)
    ones = np.zeros(idx.shape, dtype=np.int64)
    for q in range(n_qubits):
        ones += (idx >> q) & 1
    return n_qubits - ones


def number_density(config: HubbardConfig, state: np.ndarray) -> float:
    """``<n_total>/N`` for a state vector or a density matrix."""
    counts = occupation_counts(config.n_qubits)
    state = np.asarray(state)
    if state.ndim == 1:
        weights = np.abs(state) ** 2
    else:
        weights = np.real(np.diagonal(state))
    return float(weights @ counts) / config.n_sites


def _annihilators(n_modes: int) -> list[np.ndarray]:
    """``c_j`` on the occupation basis; bit ``j`` of the index is ``n_j``."""
    dim = 1 << n_modes
    idx = np.arange(dim)
    ops = []
    for j in range(n_modes):
        mat = np.zeros((dim, dim))
        occupied = ((idx >> j) & 1) == 1
        src = idx[occupied]
        below = src & ((1 << j) - 1)
        sign = np.array([(-1) ** bin(b).count("1") for b in below], dtype=float)
        mat[src ^ (1 << j), src] = sign
        ops.append(mat)
    return ops


def fermionic_oracle_matrix(config: HubbardConfig, basis: str = "qubit") -> np.ndarray:
    """Hubbard Hamiltonian assembled directly from fermionic operator matrices.

    ``basis="occupation"`` returns it with bit ``j`` equal to ``n_j``;
    ``basis="qubit"`` re-indexes to the qubit basis, where occupied means ``|0>``.
    """
    n_modes = config.n_qubits
    if n_modes > ORACLE_QUBIT_CAP:
        raise ResourceError(f"{n_modes} modes exceeds oracle cap of {ORACLE_QUBIT_CAP}")
    c = _annihilators(n_modes)
    cd = [m.T for m in c]
    num = [cd[j] @ c[j] for j in range(n_modes)]
    dim = 1 << n_modes
    h = np.zeros((dim, dim))
    for spin in (UP, DOWN):
        for i, j in config.bonds():
            a, b = config.qubit(i, spin), config.qubit(j, spin)
            hop = cd[a] @ c[b]
            h -= config.t * (hop + hop.T)
    for i in range(config.n_sites):
        up, dn = config.qubit(i, UP), config.qubit(i, DOWN)
        h += config.u * num[up] @ num[dn]
        h -= config.mu * (num[up] + num[dn])
    if basis == "occupation":
        return h.astype(complex)
    if basis != "qubit":
        raise ValueError(f"unknown basis {basis!r}")
    flip = np.arange(dim)[::-1]
    return h[np.ix_(flip, flip)].astype(complex)
