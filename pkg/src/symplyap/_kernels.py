"""Compiled inner loops for long matrix-product cocycles."""
import numpy as np
from numba import njit

# column norm above which a frame is re-orthonormalized ahead of schedule
OVERFLOW_NORM = 1e150


@njit(cache=True)
def qr_cocycle(table, codes, frame, batch_edges, reorth_every):
    """Push ``frame`` through ``table[codes[k]]`` with periodic QR.

    Returns per-batch sums of ``log|R_ii|`` (shape ``(batches, p)``), the final
    orthonormal frame and the worst orthogonality defect seen after a QR.
    Batch ``b`` covers steps ``batch_edges[b] .. batch_edges[b+1]-1``; a QR is
    always taken at a batch edge so batch sums are exact.
    """
    nb = batch_edges.shape[0] - 1
    d, p = frame.shape
    sums = np.zeros((nb, p))
    q = np.ascontiguousarray(frame)
    eye = np.eye(p)
    worst = 0.0
    for b in range(nb):
        since = 0
        for k in range(batch_edges[b], batch_edges[b + 1]):
            q = np.ascontiguousarray(table[codes[k]]) @ q
            since += 1
            last = k == batch_edges[b + 1] - 1
            big = False
            if not last and since < reorth_every:
                for j in range(p):
                    s = 0.0
                    for i in range(d):
                        s += q[i, j] * q[i, j]
                    if s > OVERFLOW_NORM * OVERFLOW_NORM:
                        big = True
            if last or since >= reorth_every or big:
                qq, r = np.linalg.qr(q)
                for j in range(p):
                    sums[b, j] += np.log(abs(r[j, j]))
                q = np.ascontiguousarray(qq)
                since = 0
        g = q.T @ q - eye
        dev = np.abs(g).max()
        if dev > worst:
            worst = dev
    return sums, q, worst


@njit(cache=True)
def vector_cocycle(table, codes, vec, record_from, record_stride):
    """Push a unit vector through ``table[codes[k]]``, renormalizing each step.

    Returns per-step ``log`` growth factors, the final vector, and the vector
    recorded every ``record_stride`` steps from step ``record_from`` on.
    """
    n = codes.shape[0]
    logs = np.empty(n)
    v = vec / np.sqrt(np.sum(vec * vec))
    nrec = 0
    if record_from < n:
        nrec = (n - record_from + record_stride - 1) // record_stride
    samples = np.empty((nrec, v.shape[0]))
    r = 0
    for k in range(n):
        v = np.ascontiguousarray(table[codes[k]]) @ v
        nv = np.sqrt(np.sum(v * v))
        logs[k] = np.log(nv)
        v = v / nv
        if k >= record_from and (k - record_from) % record_stride == 0:
            samples[r] = v
            r += 1
    return logs, v, samples
