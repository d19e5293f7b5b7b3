"""Landscape and optimisation-spread studies.

``free_energy_variance`` samples both circuits' parameters uniformly and
reports how much the objective (or one gradient component) varies, a probe for
barren plateaus. ``multi_seed_study`` reruns the optimiser from several random
starts and aggregates the spread of the final metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qvqt.engine import evaluate, hubbard_reference, make_problem, optimize
from qvqt.hubbard import ORACLE_QUBIT_CAP, HubbardConfig

VARIANCE_COLUMNS = ("n_sites", "layers", "n_samples", "variance", "seed")
MULTISEED_COLUMNS = ("beta", "metric", "mean", "std", "n_seeds")
METRICS = ("F", "E", "S", "number_density", "iterations")


def derive_seed(master: int, index: int) -> int:
    """Per-sample seed: two 32-bit words of ``SeedSequence([master, index])`` folded into one integer."""
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def sample_variance(values) -> float:
    """Unbiased (n - 1) variance; zero for fewer than two samples."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(np.var(values, ddof=1))


def two_pass_variance(values) -> float:
    """Textbook two-pass estimator, kept as an independent check."""
    values = [float(v) for v in values]
    n = len(values)
    if n < 2:
        return 0.0
    mean = sum(values) / n
    return sum((v - mean) ** 2 for v in values) / (n - 1)


def free_energy_variance(
    config: HubbardConfig,
    layers: int,
    n_samples: int = 500,
    seed: int = 0,
    beta: float = 1.0,
    mode: str = "free_energy",
    thetas: list | None = None,
) -> float:
    """Variance of ``F`` (or of its first rotation-circuit derivative) over uniform parameters.

    Both circuits get ``layers`` layers. Sample ``i`` draws all angles from
    U(-pi, pi) with ``derive_seed(seed, i)``; ``thetas`` overrides the draw
    with explicit ``(theta1, theta2)`` pairs.
    """
    if mode not in ("free_energy", "gradient"):
        raise ValueError(f"unknown mode {mode!r}")
    problem = make_problem(config, beta, layers, layers)
    n1, n2 = problem.n_params
    if thetas is None:
        thetas = []
        for i in range(n_samples):
            x = np.random.default_rng(derive_seed(seed, i)).uniform(-np.pi, np.pi, n1 + n2)
            thetas.append(problem.split(x))
    values = []
    for theta1, theta2 in thetas:
        ev = evaluate(theta1, theta2, problem, with_gradient=mode == "gradient")
        values.append(ev.F if mode == "free_energy" else ev.grad2[0])
    return sample_variance(values)


def variance_rows(config: HubbardConfig, layer_range, n_samples=500, seed=0, beta=1.0, mode="free_energy") -> list[dict]:
    return [
        {
            "n_sites": config.n_sites,
            "layers": layers,
            "n_samples": n_samples,
            "variance": free_energy_variance(config, layers, n_samples, seed, beta, mode),
            "seed": seed,
        }
        for layers in layer_range
    ]


@dataclass
class SeedStudy:
    beta: float
    seeds: list[int]
    values: dict[str, list[float]]
    unconverged: list[int] = field(default_factory=list)
    exact: dict[str, float] = field(default_factory=dict)

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values[metric]))

    def std(self, metric: str) -> float:
        """One (n - 1) standard deviation across seeds."""
        return float(np.sqrt(sample_variance(self.values[metric])))

    def rows(self) -> list[dict]:
        n = len(self.seeds)
        return [
            {"beta": self.beta, "metric": m, "mean": self.mean(m), "std": self.std(m), "n_seeds": n}
            for m in METRICS
        ]


def multi_seed_study(
    config: HubbardConfig,
    betas,
    n_seeds: int = 10,
    master_seed: int = 0,
    layers1: int = 4,
    layers2: int = 4,
    init: str = "uniform",
    budget: int = 500,
    seeds: list[int] | None = None,
) -> list[SeedStudy]:
    """Optimise from ``n_seeds`` starts per beta and collect the final metrics.

    Runs that exhaust the budget are kept with their final values and listed
    in ``unconverged``.
    """
    if seeds is None:
        seeds = [derive_seed(master_seed, i) for i in range(n_seeds)]
    if len(seeds) < 2:
        raise ValueError("a spread needs at least two seeds")
    studies = []
    for beta in betas:
        reference = hubbard_reference(config, beta) if config.n_qubits <= ORACLE_QUBIT_CAP else None
        problem = make_problem(config, beta, layers1, layers2)
        values = {m: [] for m in METRICS}
        unconverged = []
        for s in seeds:
            r = optimize(problem, init=init, seed=s, budget=budget, reference=reference, n_sites=config.n_sites)
            for m in METRICS:
                values[m].append(float(getattr(r, m)))
            if not r.converged:
                unconverged.append(s)
        exact = {}
        if reference is not None:
            exact = {"F": reference.free_energy, "E": reference.energy, "S": reference.entropy, "number_density": reference.number_density}
        studies.append(SeedStudy(beta, list(seeds), values, unconverged, exact))
    return studies
