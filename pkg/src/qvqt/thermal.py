"""Exact-diagonalization reference: Gibbs states, thermodynamics, fidelity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERACY_RTOL = 1e-9


class InvalidStateError(ValueError):
    """Matrix is not a valid density matrix."""


@dataclass(frozen=True)
class ThermalExact:
    beta: float
    rho: np.ndarray
    free_energy: float
    energy: float
    entropy: float
    number_density: float | None = None
    log_partition: float = 0.0


def exact_thermal(h: np.ndarray, beta: float, number_op: np.ndarray | None = None, n_sites: int | None = None) -> ThermalExact:
    """Gibbs state ``exp(-beta H)/Z`` and its F, E, S (natural log).

    ``number_op`` (diagonal vector or matrix) with ``n_sites`` adds the
    number density ``tr(rho n)/N``.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    evals, evecs = np.linalg.eigh(h)
    shifted = -beta * (evals - evals[0])
    weights = np.exp(shifted)
    z_shifted = weights.sum()
    p = weights / z_shifted
    log_z = np.log(z_shifted) - beta * evals[0]
    energy = float(p @ evals)
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    rho = (evecs * p) @ evecs.conj().T
    density = None
    if number_op is not None:
        if n_sites is None:
            raise ValueError("n_sites is required with number_op")
        n_op = np.asarray(number_op)
        occ = np.real(np.diagonal(rho)) @ n_op if n_op.ndim == 1 else np.real(np.trace(rho @ n_op))
        density = float(occ) / n_sites
    return ThermalExact(beta, rho, float(-log_z / beta), energy, entropy, density, float(log_z))


def ground_state_expectations(h: np.ndarray, number_op: np.ndarray | None = None, n_sites: int | None = None) -> tuple[float, float | None]:
    """``(E0, number density)`` of the uniform mixture over the lowest eigenspace."""
    evals, evecs = np.linalg.eigh(h)
    scale = max(1.0, abs(evals[0]))
    ground = evecs[:, np.abs(evals - evals[0]) <= DEGENERACY_RTOL * scale]
    projector = ground @ ground.conj().T / ground.shape[1]
    density = None
    if number_op is not None:
        n_op = np.asarray(number_op)
        n_op = np.diag(n_op) if n_op.ndim == 1 else n_op
        density = float(np.real(np.trace(projector @ n_op))) / n_sites
    return float(evals[0]), density


def _psd_sqrt(rho: np.ndarray, clip: float = 1e-10, invalid: float = 1e-8) -> np.ndarray:
    evals, evecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    if evals.min() < -invalid:
        raise InvalidStateError(f"eigenvalue {evals.min():.3e} below -{invalid}")
    evals = np.where(evals >= -clip, np.clip(evals, 0.0, None), 0.0)
    return (evecs * np.sqrt(evals)) @ evecs.conj().T


def _normalized(rho: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    tr = np.real(np.trace(rho))
    if abs(tr - 1.0) > tol:
        raise InvalidStateError(f"trace {tr} differs from 1 by more than {tol}")
    return rho / tr


def fidelity(rho: np.ndarray, rho_rec: np.ndarray) -> float:
    """``(tr sqrt(sqrt(rho_rec) rho sqrt(rho_rec)))**2``."""
    rho, rho_rec = _normalized(rho), _normalized(rho_rec)
    _psd_sqrt(rho)  # validates rho
    root = _psd_sqrt(rho_rec)
    inner = root @ rho @ root
    evals = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    f = float(np.sum(np.sqrt(np.clip(evals, 0.0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def reconstruct_density_matrix(p: np.ndarray, unitary: np.ndarray) -> np.ndarray:
    """``sum_i p_i V|i><i|V^dag`` for basis states ``|i>``."""
    p = np.asarray(p, dtype=float)
    if abs(p.sum() - 1.0) > 1e-8:
        raise ValueError("probabilities must sum to 1")
    return (unitary * p) @ unitary.conj().T


def von_neumann_entropy(rho: np.ndarray) -> float:
    evals = np.linalg.eigvalsh(rho)
    evals = evals[evals > 1e-300]
    return float(-(evals * np.log(evals)).sum())
