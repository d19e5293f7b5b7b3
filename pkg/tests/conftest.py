from functools import reduce

import numpy as np
import pytest

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_string(width, ops):
    """Dense Pauli string built with Kronecker products; qubit 0 is the rightmost factor."""
    letters = dict(ops)
    factors = [PAULI[letters.get(q, "I")] for q in reversed(range(width))]
    return reduce(np.kron, factors)


def kron_sum(op):
    return sum((c * kron_string(op.width, s.ops) for c, s in op.terms), np.zeros((1 << op.width,) * 2, complex))


def random_state(rng, n, batch=None):
    shape = (1 << n,) if batch is None else (1 << n, batch)
    psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return psi / np.linalg.norm(psi, axis=0)


def random_density(rng, n, rank=None):
    dim = 1 << n
    a = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng():
    return np.random.default_rng(20231215)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line, echo it, and return the verdict."""

    def _report(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
