"""Dense statevector kernels.

States are complex arrays of shape ``(2**n,)`` or, for a batch of states
evolved together, ``(2**n, batch)``. Qubit 0 is the least significant bit of
the basis index. Random draws use numpy's ``default_rng`` (PCG64) seeded
explicitly by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from qvqt.pauli import PauliSum, _popcount_parity

ROTATIONS = ("RX", "RY", "RZ")
EXPONENTIALS = ("EXP_XX", "EXP_YY", "EXP_ZZ")
PARAMETERIZED = ROTATIONS + EXPONENTIALS
FIXED = ("H", "S", "X", "CNOT")
TWO_QUBIT = ("CNOT",) + EXPONENTIALS
GATE_KINDS = PARAMETERIZED + FIXED

_SQ2 = 1 / np.sqrt(2)
_FIXED_MATRICES = {
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    # basis |q1 q0> with q0 = control
    "CNOT": np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex),
}


@dataclass(frozen=True)
class Gate:
    """One gate. Parameterized kinds carry a fixed ``angle`` or trainable ``params``.

    For trainable gates the bound angle is ``scale * sum(values of params)``;
    rotations ``R_P(phi) = exp(-i phi P / 2)``, exponentials
    ``EXP_PP(theta) = exp(i theta P (x) P)``.
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    params: tuple[str, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        n_expected = 2 if self.kind in TWO_QUBIT else 1
        if len(self.qubits) != n_expected:
            raise ValueError(f"{self.kind} acts on {n_expected} qubit(s)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} needs distinct qubits")
        if self.kind in PARAMETERIZED:
            if (self.angle is None) == (not self.params):
                raise ValueError(f"{self.kind} needs exactly one of angle or params")
        elif self.angle is not None or self.params:
            raise ValueError(f"{self.kind} takes no angle")

    @property
    def is_parameterized(self) -> bool:
        return self.kind in PARAMETERIZED

    @property
    def trainable(self) -> bool:
        return bool(self.params)


def generator(kind: str) -> tuple[str, float] | None:
    """Pauli letter and factor ``c`` with ``gate(angle) = exp(i c angle P)``."""
    if kind in ROTATIONS:
        return kind[1], -0.5
    if kind in EXPONENTIALS:
        return kind[-1], 1.0
    return None


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    """Small unitary of a gate on its own qubits (first listed qubit = low bit)."""
    if kind in _FIXED_MATRICES:
        return _FIXED_MATRICES[kind].copy()
    letter, c = generator(kind)
    p = {"X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1, -1])}[letter]
    if kind in EXPONENTIALS:
        p = np.kron(p, p)
    a = c * angle
    return np.cos(a) * np.eye(p.shape[0]) + 1j * np.sin(a) * p


@lru_cache(maxsize=4096)
def pauli_action(n_qubits: int, flip: int, sign: int, n_y: int) -> tuple[np.ndarray, np.ndarray]:
    """``(source, phase)`` with ``(P psi)[c] = phase[c] * psi[source[c]]``."""
    source = np.arange(1 << n_qubits, dtype=np.int64) ^ flip
    phase = (1j ** n_y) * (1.0 - 2.0 * _popcount_parity(source & sign))
    source.setflags(write=False)
    phase.setflags(write=False)
    return source, phase


def _two_qubit_pauli(letter: str, qubits: tuple[int, ...]) -> tuple[int, int, int]:
    mask = sum(1 << q for q in qubits)
    flip = mask if letter in "XY" else 0
    sign = mask if letter in "YZ" else 0
    n_y = len(qubits) if letter == "Y" else 0
    return flip, sign, n_y


def gate_pauli(gate: Gate) -> tuple[int, int, int] | None:
    gen = generator(gate.kind)
    if gen is None:
        return None
    return _two_qubit_pauli(gen[0], gate.qubits)


def n_qubits_of(state: np.ndarray) -> int:
    n = state.shape[0].bit_length() - 1
    if 1 << n != state.shape[0]:
        raise ValueError("state length is not a power of two")
    return n


def _bcast(vec: np.ndarray, state: np.ndarray) -> np.ndarray:
    return vec if state.ndim == 1 else vec[:, None]


def apply_pauli(state: np.ndarray, n_qubits: int, pauli: tuple[int, int, int]) -> np.ndarray:
    source, phase = pauli_action(n_qubits, *pauli)
    if pauli[0] == 0:
        return _bcast(phase, state) * state
    return _bcast(phase, state) * state[source]


def apply_pauli_rotation(state: np.ndarray, n_qubits: int, pauli: tuple[int, int, int], a: float) -> np.ndarray:
    """``exp(i a P) |state>``."""
    source, phase = pauli_action(n_qubits, *pauli)
    if pauli[0] == 0:
        return _bcast(np.cos(a) + 1j * np.sin(a) * phase, state) * state
    return np.cos(a) * state + (1j * np.sin(a)) * (_bcast(phase, state) * state[source])


def _apply_matrix(state: np.ndarray, n_qubits: int, mat: np.ndarray, qubits: tuple[int, ...]) -> np.ndarray:
    batch = state.shape[1:]
    tensor = state.reshape((2,) * n_qubits + batch)
    # axis of qubit q in the C-ordered reshape
    axes = [n_qubits - 1 - q for q in reversed(qubits)]
    k = len(qubits)
    op = mat.reshape((2,) * (2 * k))
    out = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(state.shape)


def apply_gate(state: np.ndarray, gate: Gate, angle: float | None = None) -> np.ndarray:
    """Return ``U_gate |state>``; ``angle`` binds a trainable gate."""
    n = n_qubits_of(state)
    if max(gate.qubits) >= n:
        raise IndexError(f"gate on qubits {gate.qubits} but state has {n} qubits")
    if gate.kind in FIXED:
        if gate.kind == "X":
            return state[np.arange(1 << n) ^ (1 << gate.qubits[0])]
        if gate.kind == "CNOT":
            ctrl, tgt = gate.qubits
            idx = np.arange(1 << n)
            return state[idx ^ (((idx >> ctrl) & 1) << tgt)]
        return _apply_matrix(state, n, _FIXED_MATRICES[gate.kind], gate.qubits)
    if angle is None:
        if gate.angle is None:
            raise ValueError(f"trainable gate {gate.kind} needs a bound angle")
        angle = gate.angle
    _, c = generator(gate.kind)
    return apply_pauli_rotation(state, n, gate_pauli(gate), c * angle)


def zero_state(n_qubits: int) -> np.ndarray:
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def basis_state(n_qubits: int, index: int) -> np.ndarray:
    """``|index>`` prepared by X gates on the set bits of ``index``."""
    psi = zero_state(n_qubits)
    for q in range(n_qubits):
        if (index >> q) & 1:
            psi = apply_gate(psi, Gate("X", (q,)))
    return psi


def apply_pauli_sum(op: PauliSum, state: np.ndarray) -> np.ndarray:
    n = n_qubits_of(state)
    if n != op.width:
        raise ValueError(f"operator width {op.width} != state width {n}")
    out = np.zeros_like(state, dtype=complex)
    for mask, ph in _grouped(op):
        if mask == 0:
            out += _bcast(ph, state) * state
        else:
            out += _bcast(ph, state) * state[np.arange(1 << n) ^ mask]
    return out


_GROUP_CACHE: dict[int, list] = {}


def _grouped(op: PauliSum) -> list[tuple[int, np.ndarray]]:
    key = id(op)
    hit = _GROUP_CACHE.get(key)
    if hit is None or hit[0] is not op:
        if len(_GROUP_CACHE) > 64:
            _GROUP_CACHE.clear()
        hit = (op, op.grouped())
        _GROUP_CACHE[key] = hit
    return hit[1]


def expectation(state: np.ndarray, op: PauliSum, imag_tol: float = 1e-10) -> float | np.ndarray:
    """``<psi|op|psi>``; per column for a batch."""
    vals = np.sum(state.conj() * apply_pauli_sum(op, state), axis=0)
    if np.max(np.abs(vals.imag)) > imag_tol * max(1.0, float(np.max(np.abs(vals.real)))):
        raise ValueError("expectation has a non-negligible imaginary part; operator is not Hermitian")
    vals = vals.real
    return float(vals) if np.ndim(vals) == 0 else vals


def basis_probabilities(state: np.ndarray) -> np.ndarray:
    return np.abs(state) ** 2


def sample_counts(p: np.ndarray, shots: int, seed) -> np.ndarray:
    """Multinomial histogram of ``shots`` draws from ``p``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    return rng.multinomial(shots, p / p.sum())


def term_expectations(state: np.ndarray, op: PauliSum) -> np.ndarray:
    """Exact ``<P_k>`` for every non-identity term, shape ``(n_terms,) + batch``."""
    n = n_qubits_of(state)
    rows = []
    for _, s in op.terms:
        if s.is_identity:
            continue
        moved = apply_pauli(state, n, (s.flip_mask, s.sign_mask, s.n_y))
        rows.append(np.sum(state.conj() * moved, axis=0).real)
    return np.array(rows).reshape((len(rows),) + state.shape[1:])


def sampled_expectations(state: np.ndarray, op: PauliSum, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Shot estimate of ``<op>`` with each Pauli term measured ``shots`` times.

    A term's outcomes are +-1 with ``P(+1) = (1 + <P>)/2``; the number of +1
    outcomes is drawn as one binomial per term. Identity weight is exact.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    exact = term_expectations(state, op)
    coeffs = np.array([c for c, s in op.terms if not s.is_identity])
    q = np.clip((1.0 + exact) / 2.0, 0.0, 1.0)
    plus = rng.binomial(shots, q)
    estimates = 2.0 * plus / shots - 1.0
    total = np.tensordot(coeffs, estimates, axes=(0, 0)) if len(coeffs) else np.zeros(state.shape[1:])
    return total + op.identity_weight()


def estimate_expectation_with_shots(state: np.ndarray, op: PauliSum, shots: int, seed) -> float:
    rng = np.random.default_rng(seed)
    return float(sampled_expectations(state, op, shots, rng))
