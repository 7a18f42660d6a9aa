"""Dense linear algebra on Sp_N(R) and its Lie algebra sp_N(R).

Conventions: the symplectic form is ``J = [[0, -I], [I, 0]]``; every norm is the
spectral norm unless stated otherwise; exterior-power bases are ordered
lexicographically on sorted index tuples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .errors import DimensionError, StructureError

TOL_SYMP = 1e-10
TOL_LIE = 1e-9
TOL_RANK = 1e-9

__all__ = [
    "SymplecticMatrix", "HamiltonianMatrix", "WedgeMatrix", "LieBasis",
    "standard_form", "symplectic_residual", "hamiltonian_residual",
    "matrix_exponential", "exp_hamiltonian_blocks", "expm_scaling_squaring", "wedge_power", "wedge_vector",
    "upper_generator", "lower_generator", "gl_generator", "canonical_basis",
    "bracket", "lie_closure",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _half_dim(a):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] % 2:
        raise DimensionError(f"expected even dimension, got {a.shape[0]}")
    return a.shape[0] // 2


def standard_form(n):
    """Return ``J = [[0, -I_n], [I_n, 0]]``."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def symplectic_residual(m):
    """Spectral norm of ``M^T J M - J``."""
    a = np.asarray(getattr(m, "entries", m), dtype=float)
    n = _half_dim(a)
    j = standard_form(n)
    return float(np.linalg.norm(a.T @ j @ a - j, 2))


def hamiltonian_residual(x):
    """Spectral norm of ``X^T J + J X``; zero iff ``X`` lies in sp_N(R)."""
    a = np.asarray(getattr(x, "entries", x), dtype=float)
    n = _half_dim(a)
    j = standard_form(n)
    return float(np.linalg.norm(a.T @ j + j @ a, 2))


@dataclass(frozen=True)
class SymplecticMatrix:
    """A real ``2N x 2N`` matrix with ``M^T J M = J``.

    The residual check is relative to ``max(1, |M|^2)``: for long products the
    entries grow and absolute rounding in ``M^T J M`` grows with them.
    """

    entries: np.ndarray
    n_channels: int = field(init=False)
    tol: float = TOL_SYMP

    def __post_init__(self):
        a = _frozen(self.entries)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "n_channels", _half_dim(a))
        scale = max(1.0, float(np.linalg.norm(a, 2)) ** 2)
        res = symplectic_residual(a)
        if res > self.tol * scale:
            raise StructureError(f"symplectic residual {res:.3e} exceeds {self.tol:.1e}")
        det = np.linalg.det(a)
        if abs(det - 1.0) > self.tol * scale ** self.n_channels:
            raise StructureError(f"determinant {det!r} is not 1")

    @property
    def residual(self):
        return symplectic_residual(self.entries)

    def inverse(self):
        """``M^{-1} = -J M^T J`` (exact for symplectic matrices)."""
        j = standard_form(self.n_channels)
        return SymplecticMatrix(-j @ self.entries.T @ j, tol=self.tol)

    def __matmul__(self, other):
        b = getattr(other, "entries", other)
        out = self.entries @ b
        if isinstance(other, SymplecticMatrix):
            return SymplecticMatrix(out, tol=max(self.tol, other.tol))
        return out

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class HamiltonianMatrix:
    """``X = [[0, I], [M, 0]]`` with ``M`` symmetric."""

    entries: np.ndarray
    n_channels: int = field(init=False)
    tol: float = TOL_SYMP

    def __post_init__(self):
        a = _frozen(self.entries)
        n = _half_dim(a)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "n_channels", n)
        scale = max(1.0, float(np.abs(a).max()))
        blocks_ok = (
            np.abs(a[:n, :n]).max() <= self.tol * scale
            and np.abs(a[n:, n:]).max() <= self.tol * scale
            and np.abs(a[:n, n:] - np.eye(n)).max() <= self.tol * scale
        )
        if not blocks_ok:
            raise StructureError("matrix is not of the form [[0, I], [M, 0]]")
        m = a[n:, :n]
        if np.linalg.norm(m - m.T, 2) > self.tol * scale:
            raise StructureError("lower-left block is not symmetric")

    @classmethod
    def from_block(cls, m, tol=TOL_SYMP):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        n = m.shape[0]
        x = np.zeros((2 * n, 2 * n))
        x[:n, n:] = np.eye(n)
        x[n:, :n] = m
        return cls(x, tol=tol)

    @property
    def block(self):
        n = self.n_channels
        return self.entries[n:, :n]


@dataclass(frozen=True)
class WedgeMatrix:
    """Matrix of ``p x p`` minors: the action on the p-th exterior power."""

    entries: np.ndarray
    p: int

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))


def _cosh_sinhc(z):
    """Entire functions ``C(z) = cosh(sqrt z)`` and ``S(z) = sinh(sqrt z)/sqrt z``."""
    z = np.asarray(z, dtype=float)
    c = np.empty_like(z)
    s = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zs = z[small]
    c[small] = 1 + zs / 2 * (1 + zs / 12 * (1 + zs / 30 * (1 + zs / 56)))
    s[small] = 1 + zs / 6 * (1 + zs / 20 * (1 + zs / 42 * (1 + zs / 72)))
    pos = (~small) & (z > 0)
    r = np.sqrt(z[pos])
    c[pos] = np.cosh(r)
    s[pos] = np.sinh(r) / r
    neg = (~small) & (z < 0)
    r = np.sqrt(-z[neg])
    c[neg] = np.cos(r)
    s[neg] = np.sin(r) / r
    return c, s


def _as_hamiltonian(x, tol):
    if isinstance(x, HamiltonianMatrix):
        return x
    return HamiltonianMatrix(np.asarray(x, dtype=float), tol=tol)


def exp_hamiltonian_blocks(m, ell):
    """Batched ``exp(ell [[0, I], [m, 0]])`` for symmetric ``m`` of shape ``(..., N, N)``.

    Uses ``X^2 = diag(m, m)``: with ``m = Q diag(lam) Q^T`` the exponential is
    ``[[C, ell S], [lam ell S, C]]`` conjugated by ``Q``, where
    ``C = C(ell^2 lam)`` and ``S = S(ell^2 lam)``. Returns a plain array with
    no validation, for inner loops.
    """
    m = np.asarray(m, dtype=float)
    lam, q = np.linalg.eigh(m)
    # ell may be an array broadcasting against the leading dimensions of m
    t = np.asarray(ell, dtype=float)[..., None]
    c, s = _cosh_sinhc(t * t * lam)
    ts = t * s
    qt = np.swapaxes(q, -1, -2)
    cq = (q * c[..., None, :]) @ qt
    sq = (q * ts[..., None, :]) @ qt
    lq = (q * (lam * ts)[..., None, :]) @ qt
    top = np.concatenate([cq, sq], axis=-1)
    bottom = np.concatenate([lq, cq], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def matrix_exponential(x, ell, tol=TOL_SYMP):
    """``exp(ell * X)`` for a Hamiltonian ``X = [[0, I], [M, 0]]``, validated as symplectic."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    h = _as_hamiltonian(x, tol)
    m = 0.5 * (h.block + h.block.T)
    return SymplecticMatrix(exp_hamiltonian_blocks(m, ell), tol=tol)


def expm_scaling_squaring(a, order=18):
    """Generic matrix exponential: truncated Taylor series plus repeated squaring.

    Kept independent of :func:`matrix_exponential` so it can serve as a check on it.
    """
    a = np.asarray(a, dtype=float)
    norm = np.linalg.norm(a, 1)
    squarings = max(0, int(np.ceil(np.log2(norm / 0.25))) if norm > 0 else 0)
    b = a / 2.0**squarings
    n = a.shape[0]
    out = np.eye(n)
    for k in range(order, 0, -1):
        out = np.eye(n) + (b @ out) / k
    for _ in range(squarings):
        out = out @ out
    return out


def wedge_power(m, p):
    """p-th exterior power of ``m``: minors indexed lexicographically."""
    a = np.asarray(getattr(m, "entries", m), dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    d = a.shape[0]
    if not 1 <= p <= d:
        raise ValueError(f"exterior order p={p} outside [1, {d}]")
    if p == 1:
        return WedgeMatrix(a, 1)
    idx = np.array(list(combinations(range(d), p)))
    sub = a[idx[:, None, :, None], idx[None, :, None, :]]
    return WedgeMatrix(np.linalg.det(sub), p)


def wedge_vector(frame):
    """Coordinates of ``f_1 ^ ... ^ f_p`` for the columns of a ``d x p`` frame."""
    f = np.asarray(frame, dtype=float)
    d, p = f.shape
    idx = np.array(list(combinations(range(d), p)))
    return np.linalg.det(f[idx, :])


def wedge_dim(d, p):
    return comb(d, p)


def bracket(a, b):
    return a @ b - b @ a


def _unit(n, i, j):
    e = np.zeros((n, n))
    e[i, j] = 1.0
    return e


def upper_generator(n, i, j):
    """``X_ij``: symmetrized ``E_ij`` in the upper-right block, halved."""
    e = _unit(n, i, j)
    x = np.zeros((2 * n, 2 * n))
    x[:n, n:] = 0.5 * (e + e.T)
    return x


def lower_generator(n, i, j):
    """``Y_ij``, the transpose of ``X_ij``."""
    return upper_generator(n, i, j).T.copy()


def gl_generator(n, i, j):
    """``Z_ij = diag(E_ij, -E_ji)``."""
    e = _unit(n, i, j)
    z = np.zeros((2 * n, 2 * n))
    z[:n, :n] = e
    z[n:, n:] = -e.T
    return z


@dataclass(frozen=True)
class LieBasis:
    """Basis of a matrix Lie algebra (elements need not be orthonormal)."""

    elements: tuple
    labels: tuple = ()

    @property
    def dim(self):
        return len(self.elements)

    def stacked(self):
        if not self.elements:
            return np.zeros((0, 0))
        return np.array([e.ravel() for e in self.elements])

    def rank(self, tol=TOL_RANK):
        s = self.stacked()
        if s.size == 0:
            return 0
        sv = np.linalg.svd(s, compute_uv=False)
        return int(np.sum(sv > tol * sv[0]))

    def span_residual(self, a):
        """Relative distance from ``a`` to the span, in Frobenius norm."""
        v = np.asarray(a, dtype=float).ravel()
        nv = np.linalg.norm(v)
        if nv == 0:
            return 0.0
        s = self.stacked()
        if s.size == 0:
            return 1.0
        coef, *_ = np.linalg.lstsq(s.T, v, rcond=None)
        return float(np.linalg.norm(s.T @ coef - v) / nv)

    def contains(self, a, tol=TOL_LIE):
        return self.span_residual(a) <= tol

    def closure_defect(self):
        """Largest relative span residual over brackets of basis pairs."""
        worst = 0.0
        for k, a in enumerate(self.elements):
            for b in self.elements[k + 1:]:
                worst = max(worst, self.span_residual(bracket(a, b)))
        return worst


def canonical_basis(n):
    """The ``X_ij, Y_ij (i <= j), Z_ij`` basis of sp_n(R); dimension ``n(2n+1)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    elems, labels = [], []
    for i in range(n):
        for j in range(i, n):
            elems.append(upper_generator(n, i, j))
            labels.append(("X", i, j))
    for i in range(n):
        for j in range(i, n):
            elems.append(lower_generator(n, i, j))
            labels.append(("Y", i, j))
    for i in range(n):
        for j in range(n):
            elems.append(gl_generator(n, i, j))
            labels.append(("Z", i, j))
    return LieBasis(tuple(elems), tuple(labels))


def _orthonormal_rows(vectors, tol_rank, scale=None):
    """Orthonormal basis (rows) of the span of unit-normalized ``vectors``.

    Vectors shorter than ``tol_rank * scale`` are treated as zero so that
    rounding noise in vanishing brackets is not normalized up to unit length.
    """
    norms = np.linalg.norm(vectors, axis=1)
    floor = 0.0 if scale is None else tol_rank * scale
    keep = norms > floor
    if not keep.any():
        return np.zeros((0, vectors.shape[1]))
    v = vectors[keep] / norms[keep, None]
    _, sv, vt = np.linalg.svd(v, full_matrices=False)
    r = int(np.sum(sv > tol_rank * sv[0]))
    return vt[:r]


def lie_closure(generators, tol_rank=TOL_RANK, max_rounds=64):
    """Basis of the Lie algebra generated by ``generators``.

    Brackets every pair of current basis elements and re-spans until the
    dimension stops growing. Candidates are unit-normalized and the numerical
    rank counts singular values above ``tol_rank`` times the largest one.
    The returned elements are Frobenius-orthonormal.
    """
    gens = [np.asarray(g, dtype=float) for g in generators]
    if not gens:
        return LieBasis(())
    shape = gens[0].shape
    if any(g.shape != shape for g in gens):
        raise DimensionError("generators must share one shape")
    basis = _orthonormal_rows(np.array([g.ravel() for g in gens]), tol_rank)
    for _ in range(max_rounds):
        mats = basis.reshape(-1, *shape)
        k = len(mats)
        cands = [bracket(mats[a], mats[b]).ravel() for a in range(k) for b in range(a + 1, k)]
        if not cands:
            break
        # basis rows are orthonormal, so |[a, b]|_F <= 2 bounds every bracket
        grown = _orthonormal_rows(np.vstack([basis, np.array(cands)]), tol_rank, scale=2.0)
        if grown.shape[0] == basis.shape[0]:
            break
        basis = grown
    return LieBasis(tuple(b.reshape(shape) for b in basis))
