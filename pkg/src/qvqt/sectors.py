"""Spin-block parity sectors.

Hopping, on-site and chemical-potential terms never change the parity of the
number of ``|1>`` qubits inside either spin block, and neither does any gate
of the rotation circuit. The ``2**(2N)`` basis states therefore split into
four sectors of ``2**(2N-2)`` states that never mix. Inside a sector the
lowest bit of each block is fixed by the parity of the block's other bits, so
a state is stored with that bit dropped: row ``r`` holds the upper ``N-1``
up-block bits in its low half and the upper ``N-1`` down-block bits above.
A parity-preserving flip mask keeps this row arithmetic closed: it acts as
``r ^ reduced_flip`` in every sector.
"""

from __future__ import annotations

import numpy as np

from qvqt.pauli import _popcount_parity
from qvqt.statevector import pauli_action


class FullSpace:
    """All ``2**n`` basis states as a single block."""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits
        self.blocks, self.rows = 1, 1 << n_qubits
        self._cache: dict = {}

    def supports(self, flip: int) -> bool:
        return True

    def table(self, pauli: tuple[int, int, int]) -> tuple[int, np.ndarray]:
        hit = self._cache.get(pauli)
        if hit is None:
            _, phase = pauli_action(self.n_qubits, *pauli)
            hit = self._cache[pauli] = (pauli[0], np.ascontiguousarray(phase.reshape(1, -1)))
        return hit

    def locate(self, index: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        index = np.asarray(index)
        return np.zeros_like(index), index


class ParitySectors:
    """The four (up parity, down parity) sectors of ``2 * n_sites`` qubits."""

    def __init__(self, n_sites: int):
        n = n_sites
        self.n_sites = n
        self.n_qubits = 2 * n
        self.blocks, self.rows = 4, 1 << (2 * n - 2)
        self._low = (1 << (n - 1)) - 1
        r = np.arange(self.rows, dtype=np.int64)
        up_hi, dn_hi = r & self._low, r >> (n - 1)
        self.global_index = np.empty((4, self.rows), dtype=np.int64)
        for s in range(4):
            up = (up_hi << 1) | (_popcount_parity(up_hi) ^ (s & 1))
            dn = (dn_hi << 1) | (_popcount_parity(dn_hi) ^ (s >> 1))
            self.global_index[s] = up | (dn << n)
        self.sector_of = np.empty(1 << self.n_qubits, dtype=np.int64)
        self.row_of = np.empty(1 << self.n_qubits, dtype=np.int64)
        for s in range(4):
            self.sector_of[self.global_index[s]] = s
            self.row_of[self.global_index[s]] = r
        self._cache: dict = {}

    def _split(self, flip: int) -> tuple[int, int]:
        return flip & ((1 << self.n_sites) - 1), flip >> self.n_sites

    def supports(self, flip: int) -> bool:
        up, dn = self._split(flip)
        return bin(up).count("1") % 2 == 0 and bin(dn).count("1") % 2 == 0

    def reduce_flip(self, flip: int) -> int:
        if not self.supports(flip):
            raise ValueError(f"flip mask {flip:#x} changes a block parity")
        up, dn = self._split(flip)
        return (up >> 1) | ((dn >> 1) << (self.n_sites - 1))

    def reduce_phase(self, phase: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(phase[self.global_index])

    def table(self, pauli: tuple[int, int, int]) -> tuple[int, np.ndarray]:
        hit = self._cache.get(pauli)
        if hit is None:
            _, phase = pauli_action(self.n_qubits, *pauli)
            hit = self._cache[pauli] = (self.reduce_flip(pauli[0]), self.reduce_phase(phase))
        return hit

    def locate(self, index: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(sector, row)`` of global basis indices."""
        index = np.asarray(index)
        return self.sector_of[index], self.row_of[index]
