"""Free-energy objective over the two circuits, its gradients, and the optimizers.

``p = |U1(theta1)|0>|^2`` is the ensemble distribution and each basis state
``|i>`` is rotated by ``V = U2(theta2)`` to give ``E_i = <i|V^dag H V|i>``.
The objective is ``F = sum_i p_i E_i - S(p) / beta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from qvqt.circuits import Circuit, build_vqc1, build_vqc2
from qvqt.hubbard import ORACLE_QUBIT_CAP, HubbardConfig, build_hamiltonian, number_operator, occupation_counts
from qvqt.pauli import PauliSum, to_dense_matrix
from qvqt.sectors import ParitySectors
from qvqt.statevector import apply_pauli_sum, sample_counts, sampled_expectations
from qvqt.thermal import ThermalExact, exact_thermal, fidelity, reconstruct_density_matrix

log = logging.getLogger(__name__)

FD_STEP = 1e-5
F_TOL = 1e-8
G_TOL = 1e-6


class NumericalError(ArithmeticError):
    """Objective or gradient became non-finite."""


@dataclass(frozen=True)
class QvqtProblem:
    hamiltonian: PauliSum
    beta: float
    vqc1: Circuit
    vqc2: Circuit
    mode: str = "exact"
    shots: int | None = None
    seed: int | None = None
    prob_cutoff: float = 1e-12

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        width = self.hamiltonian.width
        if self.vqc1.n_qubits != width or self.vqc2.n_qubits != width:
            raise ValueError("circuits and Hamiltonian act on different qubit counts")
        if not 0.0 <= self.prob_cutoff <= 1e-3:
            raise ValueError("prob_cutoff must lie in [0, 1e-3]")
        if self.mode not in ("exact", "shots"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "shots" and (self.shots is None or self.shots < 1):
            raise ValueError("shots mode needs shots >= 1")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta

    @property
    def n_params(self) -> tuple[int, int]:
        return self.vqc1.n_params, self.vqc2.n_params

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n1 = self.vqc1.n_params
        return x[:n1], x[n1:]

    @cached_property
    def space(self):
        """Parity sectors when H and the rotation circuit preserve them, else the full space."""
        n = self.hamiltonian.width
        if n >= 2 and n % 2 == 0:
            sectors = ParitySectors(n // 2)
            if self.vqc2.supports(sectors) and all(sectors.supports(s.flip_mask) for _, s in self.hamiltonian.terms):
                return sectors
        return self.vqc2.full_space

    @cached_property
    def hamiltonian_tables(self) -> list[tuple[int, np.ndarray]]:
        space = self.space
        if isinstance(space, ParitySectors):
            return [(space.reduce_flip(m), space.reduce_phase(ph)) for m, ph in self.hamiltonian.grouped()]
        return [(m, ph.reshape(1, -1)) for m, ph in self.hamiltonian.grouped()]


@dataclass
class Evaluation:
    F: float
    E: float
    S: float
    p: np.ndarray
    energies: np.ndarray  # E_i for selected outcomes
    selected: np.ndarray
    tail_mass: float
    grad1: np.ndarray | None = None
    grad2: np.ndarray | None = None


@dataclass
class QvqtResult:
    theta1: np.ndarray
    theta2: np.ndarray
    F: float
    E: float
    S: float
    p: np.ndarray
    iterations: int
    layers1: int
    layers2: int
    number_density: float | None = None
    fidelity: float | None = None
    converged: bool = False
    seed: int | None = None
    mode: str = "exact"
    shots: int | None = None
    evaluations: int = 0
    history: list = field(default_factory=list, repr=False)


def shannon_entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-10):
        raise ValueError("negative probability")
    if abs(p.sum() - 1.0) > 1e-8:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def ensemble_probabilities(theta1: np.ndarray, vqc1: Circuit, shots: int | None = None, seed=None) -> np.ndarray:
    """Exact ``|U1|0>|^2``, or empirical frequencies when ``shots`` is given."""
    p = np.abs(vqc1.run(theta1)) ** 2
    if shots is None:
        return p
    return sample_counts(p, shots, seed) / shots


def _evolve(problem: QvqtProblem, theta2: np.ndarray, selected: np.ndarray, angles2=None) -> np.ndarray:
    """``V |i>`` for every selected basis index ``i`` (columns)."""
    dim = 1 << problem.vqc2.n_qubits
    basis = np.zeros((dim, len(selected)), dtype=complex)
    basis[selected, np.arange(len(selected))] = 1.0
    return problem.vqc2.run(theta2, basis, angles=angles2)


def _check_finite(value, theta1, theta2, what: str):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite {what}; theta1={theta1.tolist()} theta2={theta2.tolist()}")


def _basis_batch(space, selected: np.ndarray):
    """Basis states ``|i>`` packed as ``(blocks, rows, batch)`` columns; returns their slots."""
    block, row = space.locate(selected)
    col = np.empty(len(selected), dtype=np.int64)
    for k in range(space.blocks):
        mask = block == k
        col[mask] = np.arange(np.count_nonzero(mask))
    width = int(col.max()) + 1 if len(col) else 0
    batch = np.zeros((space.blocks, space.rows, width), dtype=complex)
    batch[block, row, col] = 1.0
    return batch, block, col


def _apply_hamiltonian(problem: QvqtProblem, states: np.ndarray) -> np.ndarray:
    out = np.zeros_like(states)
    rows = np.arange(states.shape[1])
    for flip, phase in problem.hamiltonian_tables:
        src = states if flip == 0 else states[:, rows ^ flip, :]
        out += phase[:, :, None] * src
    return out


def evaluate(theta1: np.ndarray, theta2: np.ndarray, problem: QvqtProblem, with_gradient: bool = False) -> Evaluation:
    """Exact-mode objective; gradients by reverse-mode (adjoint) differentiation."""
    theta1, theta2 = np.asarray(theta1, float), np.asarray(theta2, float)
    angles1 = problem.vqc1.angles(theta1)
    psi1 = problem.vqc1.run(theta1, angles=angles1)
    p = np.abs(psi1) ** 2
    _check_finite(p, theta1, theta2, "distribution")
    selected = np.flatnonzero(p > problem.prob_cutoff)
    angles2 = problem.vqc2.angles(theta2)
    space = problem.space
    batch, block, col = _basis_batch(space, selected)
    states = problem.vqc2.evolve(angles2, batch, space)
    h_states = _apply_hamiltonian(problem, states)
    energies = np.real(np.sum(states.conj() * h_states, axis=1))[block, col]
    weights = p[selected]
    energy = float(weights @ energies)
    entropy = shannon_entropy(p / p.sum())
    free = energy - entropy / problem.beta
    _check_finite(free, theta1, theta2, "free energy")
    ev = Evaluation(free, energy, entropy, p, energies, selected, float(p.sum() - weights.sum()))
    if not with_gradient:
        return ev

    slot_weights = np.zeros(batch.shape[::2])
    slot_weights[block, col] = weights
    lam2 = h_states * slot_weights[:, None, :]
    dangles2 = problem.vqc2.adjoint_gradient(angles2, states, lam2, space)
    ev.grad2 = problem.vqc2.angle_gradient_to_params(dangles2)

    ev.grad1 = problem.vqc1.angle_gradient_to_params(
        problem.vqc1.adjoint_gradient(angles1, psi1, _dF_dp(p, selected, energies, problem.temperature) * psi1)
    )
    _check_finite(np.concatenate([ev.grad1, ev.grad2]), theta1, theta2, "gradient")
    return ev


def _dF_dp(p: np.ndarray, selected: np.ndarray, energies: np.ndarray, temperature: float) -> np.ndarray:
    """``dF/dp_i = E_i + T ln p_i``; the ``+T`` of the entropy derivative sums to zero."""
    g = np.zeros_like(p)
    g[selected] = energies
    pos = p > 0
    g[pos] += temperature * np.log(p[pos])
    return g


def ensemble_energy(theta1: np.ndarray, theta2: np.ndarray, problem: QvqtProblem) -> tuple[float, float]:
    """``(E, discarded tail mass)``; shot-estimated in shots mode."""
    if problem.mode == "shots":
        est = shot_estimate(theta1, theta2, problem)
        return est["E"], 0.0
    ev = evaluate(theta1, theta2, problem)
    return ev.E, ev.tail_mass


def free_energy(theta1: np.ndarray, theta2: np.ndarray, problem: QvqtProblem) -> float:
    if problem.mode == "shots":
        return shot_estimate(theta1, theta2, problem)["F"]
    return evaluate(theta1, theta2, problem).F


def gradient(theta1: np.ndarray, theta2: np.ndarray, problem: QvqtProblem, method: str = "parameter_shift") -> tuple[np.ndarray, np.ndarray]:
    """``(dF/dtheta1, dF/dtheta2)`` of the exact objective.

    ``parameter_shift`` evaluates shifted circuits gate by gate,
    ``adjoint`` back-propagates through the simulation, and
    ``finite_difference`` takes central differences of ``F``.
    """
    theta1, theta2 = np.asarray(theta1, float), np.asarray(theta2, float)
    if method == "adjoint":
        ev = evaluate(theta1, theta2, problem, with_gradient=True)
        return ev.grad1, ev.grad2
    if method == "parameter_shift":
        return _parameter_shift(theta1, theta2, problem)
    if method == "finite_difference":
        return _finite_difference(theta1, theta2, problem)
    raise ValueError(f"unknown gradient method {method!r}")


def _shift_pairs(circuit: Circuit, angles: np.ndarray):
    """Yield ``(gate index, angles+, angles-, factor)``; ``d/da = factor * (f+ - f-)``.

    A gate ``exp(i c a P)`` with ``P**2 = 1`` is shifted by ``pi / (4 c)``
    and the derivative is ``c (f(a + shift) - f(a - shift))``.
    """
    from qvqt.statevector import generator

    for k, g in enumerate(circuit.gates):
        if not g.trainable:
            continue
        c = generator(g.kind)[1]
        shift = np.pi / (4 * c)
        plus, minus = angles.copy(), angles.copy()
        plus[k] += shift
        minus[k] -= shift
        yield k, plus, minus, c


def _parameter_shift(theta1: np.ndarray, theta2: np.ndarray, problem: QvqtProblem) -> tuple[np.ndarray, np.ndarray]:
    base = evaluate(theta1, theta2, problem)
    selected, weights = base.selected, base.p[base.selected]
    h = problem.hamiltonian

    def weighted_energy(angles2):
        states = _evolve(problem, theta2, selected, angles2)
        return float(weights @ np.real(np.sum(states.conj() * apply_pauli_sum(h, states), axis=0)))

    angles2 = problem.vqc2.angles(theta2)
    dangles2 = np.zeros(len(angles2))
    for k, plus, minus, c in _shift_pairs(problem.vqc2, angles2):
        dangles2[k] = c * (weighted_energy(plus) - weighted_energy(minus))

    g = _dF_dp(base.p, selected, base.energies, problem.temperature)
    angles1 = problem.vqc1.angles(theta1)
    dangles1 = np.zeros(len(angles1))
    for k, plus, minus, c in _shift_pairs(problem.vqc1, angles1):
        dp = c * (np.abs(problem.vqc1.run(theta1, angles=plus)) ** 2 - np.abs(problem.vqc1.run(theta1, angles=minus)) ** 2)
        dangles1[k] = g @ dp
    return problem.vqc1.angle_gradient_to_params(dangles1), problem.vqc2.angle_gradient_to_params(dangles2)


def _finite_difference(theta1: np.ndarray, theta2: np.ndarray, problem: QvqtProblem, step: float = FD_STEP):
    x = np.concatenate([theta1, theta2])
    grad = np.zeros_like(x)
    for k in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        fp = evaluate(*problem.split(xp), problem).F
        fm = evaluate(*problem.split(xm), problem).F
        grad[k] = (fp - fm) / (2 * step)
    return problem.split(grad)


def shot_estimate(theta1: np.ndarray, theta2: np.ndarray, problem: QvqtProblem, observables: dict[str, PauliSum] | None = None) -> dict:
    """Shot-noise estimates of F, E, S (and extra observables) at fixed parameters.

    ``p`` is the empirical distribution of ``shots`` measurements of the first
    circuit; only observed outcomes are rotated and each of their Pauli terms
    is estimated from ``shots`` samples.
    """
    rng = np.random.default_rng(problem.seed)
    p_exact = np.abs(problem.vqc1.run(theta1)) ** 2
    counts = rng.multinomial(problem.shots, p_exact / p_exact.sum())
    p_hat = counts / problem.shots
    observed = np.flatnonzero(counts)
    states = _evolve(problem, np.asarray(theta2, float), observed)
    energies = sampled_expectations(states, problem.hamiltonian, problem.shots, rng)
    energy = float(p_hat[observed] @ energies)
    entropy = shannon_entropy(p_hat)
    out = {"F": energy - entropy / problem.beta, "E": energy, "S": entropy, "p": p_hat}
    for name, op in (observables or {}).items():
        out[name] = float(p_hat[observed] @ sampled_expectations(states, op, problem.shots, rng))
    return out


def initial_parameters(n: int, init: str, seed) -> np.ndarray:
    """``gaussian``: N(0, 1); ``uniform``: U(-pi, pi). Drawn with PCG64(seed)."""
    rng = np.random.default_rng(seed)
    if init == "gaussian":
        return rng.normal(0.0, 1.0, size=n)
    if init == "uniform":
        return rng.uniform(-np.pi, np.pi, size=n)
    raise ValueError(f"unknown init {init!r}")


class _Converged(Exception):
    pass


def minimize_free_energy(problem: QvqtProblem, x0: np.ndarray, budget: int = 500) -> tuple[np.ndarray, int, bool, int]:
    """L-BFGS on the exact objective with adjoint gradients.

    Stops once one accepted step changes F by less than ``F_TOL`` while the
    gradient infinity-norm is below ``G_TOL``, or after ``budget`` iterations.
    Returns ``(x, iterations, converged, evaluations)``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    cache: dict[bytes, tuple[float, np.ndarray]] = {}
    state = {"prev": None, "iters": 0, "converged": False, "evals": 0}

    def fun(x):
        key = x.tobytes()
        if key not in cache:
            ev = evaluate(*problem.split(x), problem, with_gradient=True)
            if len(cache) > 8:
                cache.clear()
            cache[key] = (ev.F, np.concatenate([ev.grad1, ev.grad2]))
            state["evals"] += 1
        return cache[key]

    def callback(intermediate_result):
        state["iters"] += 1
        f, g = fun(intermediate_result.x)
        prev = state["prev"]
        state["prev"] = f
        if prev is not None and abs(prev - f) < F_TOL and np.max(np.abs(g)) < G_TOL:
            state["converged"] = True
            raise StopIteration

    res = minimize(
        fun,
        np.asarray(x0, dtype=float),
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": budget, "maxfun": 20 * budget, "ftol": 1e-15, "gtol": 1e-10, "maxcor": 20},
    )
    x = res.x
    if not state["converged"]:
        _, g = fun(x)
        state["converged"] = bool(np.max(np.abs(g)) < G_TOL)
    return x, max(state["iters"], 1), state["converged"], state["evals"]


def _reference(problem: QvqtProblem) -> ThermalExact | None:
    if problem.hamiltonian.width > ORACLE_QUBIT_CAP:
        return None
    return exact_thermal(to_dense_matrix(problem.hamiltonian), problem.beta)


def finalize(problem: QvqtProblem, x: np.ndarray, reference: ThermalExact | None = None, n_sites: int | None = None) -> QvqtResult:
    """Metrics at fixed parameters: exact, or shot-estimated in shots mode."""
    theta1, theta2 = problem.split(np.asarray(x, dtype=float))
    n_q = problem.hamiltonian.width
    n_sites = n_sites or n_q // 2
    if problem.mode == "shots":
        n_op = number_operator(HubbardConfig(n_sites, boundary="open"))
        est = shot_estimate(theta1, theta2, problem, {"n": n_op})
        p, F, E, S = est["p"], est["F"], est["E"], est["S"]
        density = est["n"] / n_sites
    else:
        ev = evaluate(theta1, theta2, problem)
        p, F, E, S = ev.p, ev.F, ev.E, ev.S
        states = _evolve(problem, theta2, ev.selected)
        occ = np.abs(states) ** 2
        density = float(p[ev.selected] @ (occupation_counts(n_q) @ occ)) / n_sites
    fid = None
    if reference is not None:
        rho_rec = reconstruct_density_matrix(p / p.sum(), problem.vqc2.unitary(theta2))
        fid = fidelity(reference.rho, rho_rec)
    return QvqtResult(
        theta1=theta1.copy(),
        theta2=theta2.copy(),
        F=F,
        E=E,
        S=S,
        p=p,
        iterations=0,
        layers1=problem.vqc1.layers,
        layers2=problem.vqc2.layers,
        number_density=density,
        fidelity=fid,
        mode=problem.mode,
        shots=problem.shots,
        seed=problem.seed,
    )


def optimize(
    problem: QvqtProblem,
    init: str = "gaussian",
    seed=None,
    budget: int = 500,
    x0: np.ndarray | None = None,
    reference: ThermalExact | None = None,
    n_sites: int | None = None,
) -> QvqtResult:
    """Jointly minimise F over both parameter sets from a random or given start.

    The optimisation always runs on the exact objective; in shots mode the
    reported metrics at the final parameters carry shot noise.
    """
    n1, n2 = problem.n_params
    if x0 is None:
        x0 = initial_parameters(n1 + n2, init, seed)
    x, iters, converged, evals = minimize_free_energy(replace(problem, mode="exact"), x0, budget)
    if reference is None:
        reference = _reference(problem)
    result = finalize(problem, x, reference, n_sites)
    result.iterations = iters
    result.converged = converged
    result.evaluations = evals
    result.seed = seed
    if not converged:
        log.info("budget of %d iterations exhausted at F=%.10g", budget, result.F)
    return result


def make_problem(
    config: HubbardConfig,
    beta: float,
    layers1: int,
    layers2: int,
    mode: str = "exact",
    shots: int | None = None,
    shot_seed=None,
    prob_cutoff: float = 1e-12,
    merge_zz: bool = True,
) -> QvqtProblem:
    return QvqtProblem(
        hamiltonian=build_hamiltonian(config),
        beta=beta,
        vqc1=build_vqc1(config.n_qubits, layers1),
        vqc2=build_vqc2(config, layers2, merge_zz=merge_zz),
        mode=mode,
        shots=shots,
        seed=shot_seed,
        prob_cutoff=prob_cutoff,
    )


def hubbard_reference(config: HubbardConfig, beta: float) -> ThermalExact:
    counts = occupation_counts(config.n_qubits)
    h = to_dense_matrix(build_hamiltonian(config), cap=ORACLE_QUBIT_CAP)
    return exact_thermal(h, beta, counts, config.n_sites)


def solve(
    config: HubbardConfig,
    beta: float,
    layers1: int = 4,
    layers2: int = 4,
    seeds=(0,),
    init: str = "gaussian",
    budget: int = 500,
    mode: str = "exact",
    shots: int | None = None,
    reference: ThermalExact | None = None,
) -> QvqtResult:
    """Best (lowest F) of independent optimisations, one per seed."""
    if reference is None and config.n_qubits <= ORACLE_QUBIT_CAP:
        reference = hubbard_reference(config, beta)
    best = None
    for seed in seeds:
        problem = make_problem(config, beta, layers1, layers2, mode, shots, shot_seed=seed)
        result = optimize(problem, init, seed, budget, reference=reference, n_sites=config.n_sites)
        if best is None or result.F < best.F:
            best = result
    return best


def _relative_error(value: float, exact: float) -> float:
    return abs(value - exact) / max(abs(exact), 1e-9)


def adaptive_layer_solve(
    config: HubbardConfig,
    beta: float,
    fidelity_target: float = 0.90,
    max_layers: int = 5,
    init: str = "gaussian",
    seed=None,
    budget: int = 500,
) -> QvqtResult:
    """Grow layers one at a time until the fidelity target is met.

    The circuit blamed for the larger relative error (energy: rotation
    circuit, entropy: distribution circuit) gets the next layer. New layers
    start at zero angles, which leaves the prepared ensemble unchanged: the
    distribution circuit gains its layer at the front, where zero rotations
    and the CNOT ring fix ``|0...0>``.
    """
    if config.n_qubits > ORACLE_QUBIT_CAP:
        raise ValueError(f"adaptive solve needs an exact reference (at most {ORACLE_QUBIT_CAP} qubits)")
    reference = hubbard_reference(config, beta)
    l1 = l2 = 1
    problem = make_problem(config, beta, l1, l2)
    x = initial_parameters(sum(problem.n_params), init, seed)
    total_iters = 0
    history = []
    while True:
        result = optimize(problem, x0=x, budget=budget, reference=reference, n_sites=config.n_sites)
        total_iters += result.iterations
        history.append((l1, l2, result.fidelity))
        if result.fidelity >= fidelity_target or (l1 >= max_layers and l2 >= max_layers):
            break
        energy_err = _relative_error(result.E, reference.energy)
        entropy_err = _relative_error(result.S, reference.entropy)
        grow_second = energy_err > entropy_err
        if grow_second and l2 >= max_layers:
            grow_second = False
        elif not grow_second and l1 >= max_layers:
            grow_second = True
        theta1, theta2 = result.theta1, result.theta2
        if grow_second:
            l2 += 1
            theta2 = np.concatenate([theta2, np.zeros(problem.vqc2.n_params // (l2 - 1))])
        else:
            l1 += 1
            theta1 = np.concatenate([np.zeros(problem.vqc1.n_params // (l1 - 1)), theta1])
        problem = make_problem(config, beta, l1, l2)
        x = np.concatenate([theta1, theta2])
    result.iterations = total_iters
    result.seed = seed
    result.history = history
    return result
