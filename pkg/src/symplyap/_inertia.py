"""Compiled block LDL^T inertia count for block-tridiagonal matrices."""
import numpy as np
from numba import njit


@njit(cache=True)
def count_below(diag_blocks, off, shifts):
    """Number of eigenvalues below each shift (Sylvester's law of inertia).

    The matrix has symmetric diagonal blocks ``diag_blocks[k]`` and scalar
    off-diagonal blocks ``off * I``. Eliminating block by block gives pivots
    ``D_k = A_k - s I - off^2 D_{k-1}^{-1}``; the count is the number of
    negative eigenvalues over all pivots. A shift whose pivot is exactly
    singular returns -1 so the caller can perturb it.
    """
    nk, n, _ = diag_blocks.shape
    out = np.zeros(shifts.shape[0], dtype=np.int64)
    off2 = off * off
    for s in range(shifts.shape[0]):
        sigma = shifts[s]
        cnt = 0
        if n == 1:
            d = diag_blocks[0, 0, 0] - sigma
            for k in range(nk):
                if k > 0:
                    d = diag_blocks[k, 0, 0] - sigma - off2 / d
                if d == 0.0:
                    cnt = -1
                    break
                if d < 0.0:
                    cnt += 1
        else:
            inv = np.zeros((n, n))
            for k in range(nk):
                dk = diag_blocks[k] - sigma * np.eye(n) - off2 * inv
                dk = 0.5 * (dk + dk.T)
                lam, q = np.linalg.eigh(dk)
                singular = False
                for i in range(n):
                    if lam[i] == 0.0:
                        singular = True
                    elif lam[i] < 0.0:
                        cnt += 1
                if singular:
                    cnt = -1
                    break
                inv = (q / lam) @ q.T
        out[s] = cnt
    return out
