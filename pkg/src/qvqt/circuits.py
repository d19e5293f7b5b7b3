"""Variational circuits: the strongly entangling distribution circuit (vqc1),
the Hamiltonian-variational rotation circuit (vqc2), Pauli-exponential
compilation to CNOT + rotations, and CNOT/parameter cost accounting.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from qvqt.hubbard import DOWN, UP, HubbardConfig
from qvqt.statevector import (
    EXPONENTIALS,
    Gate,
    _FIXED_MATRICES,
    _apply_matrix,
    apply_gate,
    gate_pauli,
    generator,
    n_qubits_of,
)
from qvqt.kernels import pauli_overlap, rotate_inplace
from qvqt.sectors import FullSpace

_SPIN_NAMES = {UP: "up", DOWN: "dn"}


def _as_3d(state: np.ndarray) -> np.ndarray:
    return state.reshape(1, state.shape[0], -1)


class CostMismatchError(AssertionError):
    """Walked CNOT count disagrees with the closed form."""


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...]
    layers: int
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.n_qubits:
                raise ValueError(f"gate {g} outside {self.n_qubits} qubits")

    @cached_property
    def param_ids(self) -> tuple[str, ...]:
        """Trainable parameters in order of first use."""
        seen: dict[str, None] = {}
        for g in self.gates:
            for p in g.params:
                seen.setdefault(p, None)
        return tuple(seen)

    @property
    def n_params(self) -> int:
        return len(self.param_ids)

    @cached_property
    def _angle_map(self) -> tuple[np.ndarray, np.ndarray]:
        index = {p: k for k, p in enumerate(self.param_ids)}
        weights = np.zeros((len(self.gates), self.n_params))
        fixed = np.zeros(len(self.gates))
        for k, g in enumerate(self.gates):
            if g.angle is not None:
                fixed[k] = g.angle
            for p in g.params:
                weights[k, index[p]] += g.scale
        return weights, fixed

    def angles(self, theta: np.ndarray) -> np.ndarray:
        """Bound angle of every gate (0 for fixed gates)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        weights, fixed = self._angle_map
        return weights @ theta + fixed

    def angle_gradient_to_params(self, dangles: np.ndarray) -> np.ndarray:
        return self._angle_map[0].T @ dangles

    def cnot_count(self) -> int:
        return sum(1 for g in self.gates if g.kind == "CNOT")

    @cached_property
    def _program(self) -> list[tuple]:
        ops = []
        for g in self.gates:
            gen = generator(g.kind)
            if gen is not None:
                ops.append(("rot", gate_pauli(g), gen[1]))
            elif g.kind == "S":
                ops.append(("mat", g.qubits, _FIXED_MATRICES["S"]))
            else:
                ops.append(("fixed", g))
        return ops

    @cached_property
    def full_space(self) -> FullSpace:
        return FullSpace(self.n_qubits)

    def _tables(self, space) -> list:
        """Per-gate ``(flip, phase)`` in ``space``; ``None`` for fixed gates."""
        cache = self.__dict__.setdefault("_table_cache", {})
        key = id(space)
        if key not in cache or cache[key][0] is not space:
            cache[key] = (space, [space.table(op[1]) if op[0] == "rot" else None for op in self._program])
        return cache[key][1]

    def supports(self, space) -> bool:
        return all(op[0] == "rot" and space.supports(op[1][0]) for op in self._program)

    def run(self, theta: np.ndarray, state: np.ndarray | None = None, angles: np.ndarray | None = None) -> np.ndarray:
        """Apply the circuit to ``state`` (default ``|0...0>``); batches allowed."""
        if angles is None:
            angles = self.angles(theta)
        if state is None:
            state = np.zeros(1 << self.n_qubits, dtype=complex)
            state[0] = 1.0
        n = self.n_qubits
        if n_qubits_of(state) != n:
            raise ValueError("state width does not match circuit")
        state = np.array(state, dtype=complex, order="C")
        tables = self._tables(self.full_space)
        for op, table, a in zip(self._program, tables, angles):
            if op[0] == "rot":
                rotate_inplace(_as_3d(state), table[0], table[1], np.cos(op[2] * a), np.sin(op[2] * a))
            elif op[0] == "mat":
                state = np.ascontiguousarray(_apply_matrix(state, n, op[2], op[1]))
            else:
                state = np.ascontiguousarray(apply_gate(state, op[1]))
        return state

    def evolve(self, angles: np.ndarray, state: np.ndarray, space) -> np.ndarray:
        """Rotation-only circuits on a ``(blocks, rows, batch)`` array in ``space``."""
        state = np.array(state, dtype=complex, order="C")
        for op, table, a in zip(self._program, self._tables(space), angles):
            if table is None:
                raise ValueError(f"{op[1].kind} is not supported in a reduced space")
            rotate_inplace(state, table[0], table[1], np.cos(op[2] * a), np.sin(op[2] * a))
        return state

    def unitary(self, theta: np.ndarray, angles: np.ndarray | None = None) -> np.ndarray:
        return self.run(theta, np.eye(1 << self.n_qubits, dtype=complex), angles=angles)

    def adjoint_gradient(self, angles: np.ndarray, final: np.ndarray, lam: np.ndarray, space=None) -> np.ndarray:
        """Derivative of a real loss with respect to every gate angle.

        ``final`` is the circuit output (single state or batch) and ``lam``
        satisfies ``dL = 2 Re <lam|d final>``. Walks the circuit backwards,
        undoing each gate on both vectors. With ``space`` given, both arrays
        are ``(blocks, rows, batch)`` in that space.
        """
        n = self.n_qubits
        psi = np.array(final, dtype=complex, order="C")
        lam = np.array(lam, dtype=complex, order="C")
        tables = self._tables(space or self.full_space)
        grads = np.zeros(len(self.gates))
        for k in range(len(self.gates) - 1, -1, -1):
            op, table, a = self._program[k], tables[k], angles[k]
            if op[0] == "rot":
                psi3, lam3 = (psi, lam) if space is not None else (_as_3d(psi), _as_3d(lam))
                grads[k] = -2.0 * op[2] * pauli_overlap(lam3, psi3, table[0], table[1]).imag
                c, s = np.cos(op[2] * a), -np.sin(op[2] * a)
                rotate_inplace(psi3, table[0], table[1], c, s)
                rotate_inplace(lam3, table[0], table[1], c, s)
            elif space is not None:
                raise ValueError(f"{op[1].kind} is not supported in a reduced space")
            elif op[0] == "mat":
                inv = op[2].conj().T
                psi = np.ascontiguousarray(_apply_matrix(psi, n, inv, op[1]))
                lam = np.ascontiguousarray(_apply_matrix(lam, n, inv, op[1]))
            else:
                # H, X and CNOT are self-inverse
                psi = np.ascontiguousarray(apply_gate(psi, op[1]))
                lam = np.ascontiguousarray(apply_gate(lam, op[1]))
        return grads

    def serialize(self) -> str:
        lines = [f"qubits={self.n_qubits} layers={self.layers} kind={self.kind}"]
        for g in self.gates:
            parts = [g.kind, *map(str, g.qubits)]
            if g.params:
                parts.append("param=" + "+".join(g.params))
                if g.scale != 1.0:
                    parts.append(f"scale={g.scale!r}")
            elif g.angle is not None:
                parts.append(f"angle={g.angle!r}")
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def deserialize(cls, text: str) -> "Circuit":
        header, *body = [ln for ln in text.splitlines() if ln.strip()]
        meta = dict(item.split("=", 1) for item in header.split())
        gates = []
        for line in body:
            kind, *rest = line.split()
            qubits, kw = [], {}
            for tok in rest:
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    kw[key] = val
                else:
                    qubits.append(int(tok))
            gates.append(
                Gate(
                    kind,
                    tuple(qubits),
                    angle=float(kw["angle"]) if "angle" in kw else None,
                    params=tuple(kw["param"].split("+")) if "param" in kw else (),
                    scale=float(kw.get("scale", 1.0)),
                )
            )
        return cls(int(meta["qubits"]), tuple(gates), int(meta["layers"]), meta["kind"])


def vqc1_layer(n_qubits: int, layer: int, entangler_range: int = 1) -> list[Gate]:
    gates = []
    for q in range(n_qubits):
        ids = [f"c1.L{layer}.q{q}.{k}" for k in range(3)]
        # Rot(a, b, c) = RZ(a) RY(b) RZ(c): RZ(c) acts first
        gates += [
            Gate("RZ", (q,), params=(ids[2],)),
            Gate("RY", (q,), params=(ids[1],)),
            Gate("RZ", (q,), params=(ids[0],)),
        ]
    for q in range(n_qubits):
        gates.append(Gate("CNOT", (q, (q + entangler_range) % n_qubits)))
    return gates


def build_vqc1(n_qubits: int, layers: int, entangler_range: int = 1) -> Circuit:
    """Strongly entangling layers: per-qubit Rot, then a CNOT ring of range r."""
    if n_qubits < 2:
        raise ValueError("vqc1 needs at least two qubits")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if entangler_range % n_qubits == 0:
        raise ValueError("entangler range is a multiple of n_qubits; CNOT would target its control")
    gates = []
    for k in range(layers):
        gates += vqc1_layer(n_qubits, k, entangler_range)
    return Circuit(n_qubits, tuple(gates), layers, "vqc1")


def _open_bonds(n_sites: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n_sites - 1)]


def vqc2_layer(config: HubbardConfig, layer: int, merge_zz: bool = True) -> list[Gate]:
    gates = []
    for spin in (UP, DOWN):
        s = _SPIN_NAMES[spin]
        for i, j in _open_bonds(config.n_sites):
            pair = (config.qubit(i, spin), config.qubit(j, spin))
            gates.append(Gate("EXP_XX", pair, params=(f"c2.L{layer}.hop.{i}-{j}.{s}.xx",)))
            gates.append(Gate("EXP_YY", pair, params=(f"c2.L{layer}.hop.{i}-{j}.{s}.yy",)))
    for i in range(config.n_sites):
        pair = (config.qubit(i, UP), config.qubit(i, DOWN))
        zz = {spin: f"c2.L{layer}.site.{i}.{_SPIN_NAMES[spin]}.zz" for spin in (UP, DOWN)}
        z = {spin: f"c2.L{layer}.site.{i}.{_SPIN_NAMES[spin]}.z" for spin in (UP, DOWN)}
        if merge_zz:
            gates.append(Gate("EXP_ZZ", pair, params=(zz[UP], zz[DOWN])))
            for spin in (UP, DOWN):
                # exp(i theta Z) = RZ(-2 theta)
                gates.append(Gate("RZ", (config.qubit(i, spin),), params=(z[spin],), scale=-2.0))
        else:
            for spin in (UP, DOWN):
                gates.append(Gate("EXP_ZZ", pair, params=(zz[spin],)))
                gates.append(Gate("RZ", (config.qubit(i, spin),), params=(z[spin],), scale=-2.0))
    return gates


def build_vqc2(config: HubbardConfig, layers: int, merge_zz: bool = True) -> Circuit:
    """Hopping block (XX, YY per open same-spin bond) then on-site block (ZZ, Z)."""
    if layers < 1:
        raise ValueError("layers must be >= 1")
    gates = []
    for k in range(layers):
        gates += vqc2_layer(config, k, merge_zz)
    return Circuit(config.n_qubits, tuple(gates), layers, "vqc2")


def compile_exponential(gate: Gate) -> list[Gate]:
    """Rewrite ``exp(i theta P(x)P)`` as basis change + CNOT . RZ . CNOT."""
    if gate.kind not in EXPONENTIALS:
        raise ValueError(f"{gate.kind} is not a Pauli exponential")
    a, b = gate.qubits
    if gate.params:
        rz = Gate("RZ", (b,), params=gate.params, scale=-2.0 * gate.scale)
    else:
        rz = Gate("RZ", (b,), angle=-2.0 * gate.angle)
    core = [Gate("CNOT", (a, b)), rz, Gate("CNOT", (a, b))]
    if gate.kind == "EXP_ZZ":
        return core
    if gate.kind == "EXP_XX":
        hs = [Gate("H", (a,)), Gate("H", (b,))]
        return hs + core + hs
    half_pi = np.pi / 2
    pre = [Gate("RX", (a,), angle=half_pi), Gate("RX", (b,), angle=half_pi)]
    post = [Gate("RX", (a,), angle=-half_pi), Gate("RX", (b,), angle=-half_pi)]
    return pre + core + post


def compile_circuit(circuit: Circuit) -> Circuit:
    gates = []
    for g in circuit.gates:
        gates += compile_exponential(g) if g.kind in EXPONENTIALS else [g]
    return Circuit(circuit.n_qubits, tuple(gates), circuit.layers, circuit.kind)


@dataclass(frozen=True)
class CostReport:
    cnot_count: int
    params_per_layer: int
    total_params: int


def cnot_formula(kind: str, n_sites: int, layers: int) -> int:
    if kind == "vqc1":
        return 2 * layers * n_sites
    if kind == "vqc2":
        return 2 * layers * (5 * n_sites - 4)
    raise ValueError(f"unknown circuit kind {kind!r}")


def params_per_layer(kind: str, n_sites: int) -> int:
    if kind == "vqc1":
        return 3 * 2 * n_sites
    if kind == "vqc2":
        return 2 * (n_sites - 1) * 2 + 4 * n_sites
    raise ValueError(f"unknown circuit kind {kind!r}")


def cost_report(kind: str, n_sites: int, layers: int) -> CostReport:
    """Closed-form costs, checked against the compiled circuit when ``layers >= 1``."""
    per_layer = params_per_layer(kind, n_sites)
    report = CostReport(cnot_formula(kind, n_sites, layers), per_layer, per_layer * layers)
    if layers == 0:
        return report
    if kind == "vqc1":
        circuit = build_vqc1(2 * n_sites, layers)
    else:
        circuit = compile_circuit(build_vqc2(HubbardConfig(n_sites, boundary="open"), layers))
    walked = circuit.cnot_count()
    if walked != report.cnot_count or circuit.n_params != report.total_params:
        raise CostMismatchError(
            f"{kind} N={n_sites} L={layers}: walked {walked} CNOTs / {circuit.n_params} params, "
            f"formula {report.cnot_count} / {report.total_params}"
        )
    return report
