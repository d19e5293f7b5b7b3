"""Variational thermal-state preparation for the Fermi-Hubbard model.

Two circuits are trained jointly: one fixes a probability distribution over
computational basis states (entropy), the other rotates those basis states
(energy). Together they minimise the Helmholtz free energy ``F = E - S / beta``.
"""

from qvqt.pauli import PauliString, PauliSum
from qvqt.hubbard import (
    HubbardConfig,
    build_hamiltonian,
    fermionic_oracle_matrix,
    number_operator,
)
from qvqt.thermal import exact_thermal, fidelity
from qvqt.engine import QvqtProblem, QvqtResult, optimize, adaptive_layer_solve

__all__ = [
    "PauliString",
    "PauliSum",
    "HubbardConfig",
    "build_hamiltonian",
    "fermionic_oracle_matrix",
    "number_operator",
    "exact_thermal",
    "fidelity",
    "QvqtProblem",
    "QvqtResult",
    "optimize",
    "adaptive_layer_solve",
]
