"""In-place numba kernels for Pauli rotations.

Arrays are ``(blocks, rows, batch)``: the full space is one block of ``2**n``
rows, a parity-reduced space has one block per sector. A Pauli acts inside
each block as ``(P psi)[k, r] = phase[k, r] * psi[k, r ^ flip]``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def rotate_inplace(state, flip, phase, cos_a, sin_a):
    """``state <- exp(i a P) state`` with ``cos_a = cos(a)``, ``sin_a = sin(a)``."""
    blocks, rows, batch = state.shape
    isin = 1j * sin_a
    for k in range(blocks):
        if flip == 0:
            for c in range(rows):
                f = cos_a + isin * phase[k, c]
                for b in range(batch):
                    state[k, c, b] *= f
            continue
        for c in range(rows):
            d = c ^ flip
            if c < d:
                pc = isin * phase[k, c]
                pd = isin * phase[k, d]
                for b in range(batch):
                    x = state[k, c, b]
                    y = state[k, d, b]
                    state[k, c, b] = cos_a * x + pc * y
                    state[k, d, b] = cos_a * y + pd * x


@njit(cache=True)
def pauli_overlap(lam, state, flip, phase):
    """``sum <lam| P |state>`` over blocks and batch columns."""
    blocks, rows, batch = state.shape
    acc = 0j
    for k in range(blocks):
        for c in range(rows):
            d = c ^ flip
            pc = phase[k, c]
            for b in range(batch):
                acc += np.conj(lam[k, c, b]) * pc * state[k, d, b]
    return acc
