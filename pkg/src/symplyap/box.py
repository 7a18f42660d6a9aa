"""Dirichlet restrictions of the random operator to ``[-ell L, ell L]``.

Two independent spectral backends:

* finite differences on a mesh aligned with the cells, with eigenvalues
  located by block LDL^T inertia counts and bisection;
* shooting with exact per-cell transfer matrices, locating zeros of
  ``det U(ell L)`` for the solution with ``U(-ell L) = 0, U'(-ell L) = I``.

Matrix solutions, their Wronskian and the Green kernel live here as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from ._inertia import count_below
from .errors import EigenvalueNotFound
from .model import ModelConfig, sample_realization, site_matrices
from .symplectic import exp_hamiltonian_blocks

TOL_EIG = 1e-8
DEFAULT_POINTS_PER_CELL = 16


@dataclass(frozen=True)
class BoxOperator:
    """``H`` restricted to ``[-ell L, ell L]`` with Dirichlet walls.

    ``realization`` must cover cells ``-L .. L-1``; cell ``n`` is
    ``[ell n, ell (n+1))``. ``mesh`` is the finite-difference spacing and
    must divide ``ell``.
    """

    cfg: ModelConfig
    realization: object
    half_cells: int
    mesh: float
    points_per_cell: int = field(init=False)

    def __post_init__(self):
        if self.half_cells < 1:
            raise ValueError("half_cells must be >= 1")
        m = self.cfg.cell_length / self.mesh
        if abs(m - round(m)) > 1e-9 * m or round(m) < 1:
            raise ValueError("mesh must divide the cell length")
        object.__setattr__(self, "points_per_cell", int(round(m)))
        r = self.realization
        if r.start > -self.half_cells or r.stop < self.half_cells:
            raise ValueError("realization does not cover the box")

    @classmethod
    def sample(cls, cfg, half_cells, seed, *labels, points_per_cell=DEFAULT_POINTS_PER_CELL):
        real = sample_realization(cfg, seed, (-half_cells, half_cells), *labels)
        return cls(cfg, real, half_cells, cfg.cell_length / points_per_cell)

    @classmethod
    def from_cells(cls, cfg, cells, points_per_cell=DEFAULT_POINTS_PER_CELL, seed=0):
        """Box with explicit disorder values, one row per cell from left to right."""
        from .model import DisorderRealization
        cells = np.atleast_2d(np.asarray(cells, dtype=float))
        if len(cells) % 2:
            raise ValueError("need an even number of cells")
        sup = np.asarray(cfg.disorder_support)
        codes = np.array([[int(np.flatnonzero(sup == v)[0]) for v in row] for row in cells])
        half = len(cells) // 2
        real = DisorderRealization(seed, -half, codes, cfg.disorder_support)
        return cls(cfg, real, half, cfg.cell_length / points_per_cell)

    @property
    def n_channels(self):
        return self.cfg.n_channels

    @property
    def half_length(self):
        return self.cfg.cell_length * self.half_cells

    @property
    def length(self):
        return 2 * self.half_length

    def cell_values(self):
        """Disorder rows for cells ``-L .. L-1``."""
        r = self.realization
        a = -self.half_cells - r.start
        return r.cells[a:a + 2 * self.half_cells]

    def cell_potentials(self, energy=0.0):
        """``V0 + diag(c w^(n)) - E`` for each cell, shape ``(2L, N, N)``."""
        return site_matrices(self.cfg, self.cell_values(), energy)

    def cell_boundaries(self):
        return -self.half_length + self.cfg.cell_length * np.arange(2 * self.half_cells + 1)

    def grid(self):
        """Interior mesh points ``x_j = -ell L + j h``, ``j = 1 .. 2Lm - 1``."""
        m = self.points_per_cell
        return -self.half_length + self.mesh * np.arange(1, 2 * self.half_cells * m)

    def point_potentials(self):
        """Potential matrix at each interior mesh point.

        A point on a cell boundary takes the mean of the two adjacent cells.
        """
        pots = self.cell_potentials()
        m = self.points_per_cell
        j = np.arange(1, 2 * self.half_cells * m)
        cell = j // m
        on_edge = (j % m) == 0
        out = pots[np.minimum(cell, len(pots) - 1)].copy()
        out[on_edge] = 0.5 * (pots[cell[on_edge] - 1] + pots[cell[on_edge]])
        return out

    def fd_blocks(self):
        """Diagonal blocks and the scalar off-diagonal of the FD matrix."""
        h2 = self.mesh**2
        n = self.n_channels
        return self.point_potentials() + (2.0 / h2) * np.eye(n), -1.0 / h2

    def fd_banded(self):
        """Lower banded storage (for ``eig_banded`` / ``solveh_banded``), index ``j N + i``."""
        diag, off = self.fd_blocks()
        n = self.n_channels
        size = diag.shape[0] * n
        ab = np.zeros((n + 1, size))
        for d in range(n):
            # entries (r + d, r) within each diagonal block
            vals = np.zeros(size)
            blockwise = diag[:, np.arange(d, n), np.arange(0, n - d)]
            vals.reshape(-1, n)[:, : n - d] = blockwise
            ab[d] = vals
        ab[n, : size - n] = off
        return ab

    def fd_dense(self):
        ab = self.fd_banded()
        n = self.n_channels
        size = ab.shape[1]
        a = np.zeros((size, size))
        for d in range(n + 1):
            idx = np.arange(size - d)
            a[idx + d, idx] = ab[d, : size - d]
            a[idx, idx + d] = ab[d, : size - d]
        return a

    def count_eigenvalues_below(self, shifts, tol_eig=TOL_EIG):
        """Inertia count of ``H_h - s`` for each shift ``s`` (eigenvalues ``< s``)."""
        diag, off = self.fd_blocks()
        s = np.atleast_1d(np.asarray(shifts, dtype=float)).copy()
        counts = count_below(np.ascontiguousarray(diag), off, s)
        tries = 0
        while (counts < 0).any():
            bad = counts < 0
            tries += 1
            if tries > 20:
                raise ArithmeticError("inertia count kept hitting singular pivots")
            s[bad] += tol_eig * np.maximum(1.0, np.abs(s[bad]))
            counts[bad] = count_below(np.ascontiguousarray(diag), off, s[bad])
        return counts

    def lower_bound(self):
        """Every FD and continuum eigenvalue lies above the lowest potential eigenvalue."""
        return float(np.linalg.eigvalsh(self.cell_potentials()).min())


def box_eigenvalues_fd(box, window, tol_eig=TOL_EIG):
    """FD eigenvalues in ``[lo, hi)`` by inertia counting and simultaneous bisection."""
    lo, hi = map(float, window)
    c_lo, c_hi = box.count_eigenvalues_below([lo, hi], tol_eig)
    k = int(c_hi - c_lo)
    if k <= 0:
        return np.zeros(0)
    target = np.arange(c_lo + 1, c_hi + 1)
    a = np.full(k, lo)
    b = np.full(k, hi)
    while True:
        width = b - a
        live = width > tol_eig * np.maximum(1.0, np.abs(0.5 * (a + b)))
        if not live.any():
            break
        mid = 0.5 * (a[live] + b[live])
        cnt = box.count_eigenvalues_below(mid, tol_eig)
        upper = cnt >= target[live]
        ai, bi = a[live], b[live]
        bi[upper] = mid[upper]
        ai[~upper] = mid[~upper]
        a[live], b[live] = ai, bi
    return np.sort(0.5 * (a + b))


def shooting_function(box, energies):
    """``det`` of the top block of the positive-diagonal QR frame at ``x = ell L``.

    The frame starts as ``[0; I]`` at ``-ell L``. Because every QR step keeps
    ``R`` with positive diagonal, the returned value is continuous in ``E``,
    has the sign of ``det U(ell L)`` and vanishes exactly at Dirichlet
    eigenvalues. Also returns the smallest singular value of that block.
    """
    e = np.atleast_1d(np.asarray(energies, dtype=float))
    n = box.n_channels
    vals = box.cell_values()
    uniq, inv = np.unique(vals, axis=0, return_inverse=True)
    inv = inv.ravel()
    mats = site_matrices(box.cfg, uniq[None, :, :], e[:, None])
    table = exp_hamiltonian_blocks(mats, box.cfg.cell_length)  # (K, U, 2N, 2N)
    frame = np.zeros((len(e), 2 * n, n))
    frame[:, n:, :] = np.eye(n)
    for c in inv:
        frame = table[:, c] @ frame
        q, r = np.linalg.qr(frame)
        frame = q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]
    top = frame[:, :n, :]
    return np.linalg.det(top), np.linalg.svd(top, compute_uv=False)[:, -1]


def _weyl_count(box, e_hi):
    span = max(e_hi - box.lower_bound(), 0.0)
    return box.n_channels * box.length * np.sqrt(span) / np.pi


def box_eigenvalues_shooting(box, window, tol_eig=TOL_EIG, oversample=10, min_points=200):
    """Dirichlet eigenvalues in ``[lo, hi)`` as zeros of the shooting function.

    The window is scanned on a grid sized from a Weyl estimate; sign changes
    are refined with Brent's method. Where the function turns back without
    changing sign, its extremum is located; if it crosses zero there the two
    roots are bracketed separately, and if it only touches zero (within
    ``tol_eig`` in energy) a double root is reported twice.
    """
    lo, hi = map(float, window)
    weyl = _weyl_count(box, hi) - _weyl_count(box, lo)
    k = int(max(min_points, oversample * 10 * (weyl + 1)))
    grid = np.linspace(lo, hi, k + 1)
    g = shooting_function(box, grid)[0]

    def f(x):
        return float(shooting_function(box, [x])[0][0])

    roots = []

    def xtol(x):
        return tol_eig * max(1.0, abs(x)) * 0.25

    for i in range(k):
        a, b = grid[i], grid[i + 1]
        if g[i] == 0.0:
            roots.append(a)
            continue
        if g[i] * g[i + 1] < 0:
            roots.append(optimize.brentq(f, a, b, xtol=xtol(a), rtol=4 * np.finfo(float).eps))
    # turning points of |g| without a sign change
    for i in range(1, k):
        if g[i - 1] * g[i] > 0 and g[i] * g[i + 1] > 0 and abs(g[i]) < abs(g[i - 1]) \
                and abs(g[i]) < abs(g[i + 1]):
            s = np.sign(g[i])
            res = optimize.minimize_scalar(lambda x: s * f(x), bounds=(grid[i - 1], grid[i + 1]),
                                           method="bounded",
                                           options={"xatol": xtol(grid[i])})
            xm = res.x
            if s * f(xm) < 0:
                roots.append(optimize.brentq(f, grid[i - 1], xm, xtol=xtol(xm)))
                roots.append(optimize.brentq(f, xm, grid[i + 1], xtol=xtol(xm)))
            else:
                # a touching zero: confirm with a small bracket around the extremum
                d = tol_eig * max(1.0, abs(xm))
                if abs(f(xm)) <= abs(f(xm + d) - f(xm)) + abs(f(xm - d) - f(xm)) + 1e-14:
                    roots.extend([xm, xm])
    out = np.sort(np.array(roots))
    return out[(out >= lo) & (out < hi)]


@dataclass(frozen=True)
class MatrixSolution:
    """Matrix solution ``U`` of ``-U'' + (V - E) U = 0`` sampled on the mesh."""

    x: np.ndarray
    U: np.ndarray
    dU: np.ndarray
    energy: float
    side: str
    box: BoxOperator = field(repr=False)

    def at(self, points):
        """``(U, U')`` at arbitrary points, from the nearest cell start in closed form."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        box = self.box
        ell = box.cfg.cell_length
        m = box.points_per_cell
        cell = np.clip(np.floor((pts + box.half_length) / ell).astype(int), 0,
                       2 * box.half_cells - 1)
        start = cell * m
        offs = pts - self.x[start]
        pots = box.cell_potentials(self.energy)[cell]
        n = box.n_channels
        out_u = np.empty((len(pts), n, n))
        out_du = np.empty((len(pts), n, n))
        for k, (p, t) in enumerate(zip(pots, offs)):
            prop = exp_hamiltonian_blocks(p, t)
            data = prop @ np.vstack([self.U[start[k]], self.dU[start[k]]])
            out_u[k], out_du[k] = data[:n], data[n:]
        return out_u, out_du


def integrate_matrix_solution(box, energy, side):
    """Propagate ``U`` with exact cell propagators.

    ``side='minus'``: ``U(-ell L) = 0, U'(-ell L) = I``, integrated rightward.
    ``side='plus'``: ``U(ell L) = 0, U'(ell L) = I``, integrated leftward.
    """
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    n = box.n_channels
    m = box.points_per_cell
    h = box.mesh
    pots = box.cell_potentials(energy)
    ncell = len(pots)
    offsets = h * np.arange(m + 1)
    # propagators from the cell start to each mesh offset, per cell
    steps = np.stack([_offset_props(p, offsets) for p in pots])  # (cells, m+1, 2N, 2N)
    total = ncell * m + 1
    data = np.zeros((total, 2 * n, n))
    if side == "minus":
        data[0, n:] = np.eye(n)
        for c in range(ncell):
            base = data[c * m]
            data[c * m: (c + 1) * m + 1] = steps[c] @ base
    else:
        data[-1, n:] = np.eye(n)
        for c in range(ncell - 1, -1, -1):
            end = data[(c + 1) * m]
            # state at the cell start, then forward within the cell
            back = _offset_props(pots[c], np.array([-box.cfg.cell_length]))[0]
            start = back @ end
            block = steps[c] @ start
            block[-1] = end
            data[c * m: (c + 1) * m + 1] = block
    x = -box.half_length + h * np.arange(total)
    return MatrixSolution(x, data[:, :n], data[:, n:], float(energy), side, box)


def _offset_props(pot, offsets):
    """``exp(t X)`` for one cell potential and several offsets ``t``."""
    out = []
    for t in offsets:
        out.append(exp_hamiltonian_blocks(pot, float(t)))
    return np.array(out)


def wronskian(plus, minus):
    """``W(U+, U-) = U-'^T U+ - U-^T U+'`` at every mesh point."""
    return np.swapaxes(minus.dU, -1, -2) @ plus.U - np.swapaxes(minus.U, -1, -2) @ plus.dU


def wronskian_drift(plus, minus):
    """Largest relative deviation of the Wronskian from its value at ``-ell L``."""
    w = wronskian(plus, minus)
    ref = np.linalg.norm(w[0], 2)
    return float(np.linalg.norm(w - w[0], 2, axis=(-2, -1)).max() / ref)


def green_kernel(box, energy, xs, ys):
    """Kernel of ``(H - E)^{-1}`` on the box, shape ``(len(xs), len(ys), N, N)``.

    ``G(x, y) = U+(x) W^{-1} U-(y)^T`` for ``x > y`` and
    ``G(x, y) = U-(x) W^{-T} U+(y)^T`` for ``x <= y`` with ``W = W(U+, U-)``,
    which makes ``G(x, y) = G(y, x)^T``.
    """
    plus = integrate_matrix_solution(box, energy, "plus")
    minus = integrate_matrix_solution(box, energy, "minus")
    w = wronskian(plus, minus)[0]
    winv = np.linalg.inv(w)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    up_x, _ = plus.at(xs)
    um_x, _ = minus.at(xs)
    up_y, _ = plus.at(ys)
    um_y, _ = minus.at(ys)
    n = box.n_channels
    g = np.empty((len(xs), len(ys), n, n))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            if x > y:
                g[i, j] = up_x[i] @ winv @ um_y[j].T
            else:
                g[i, j] = um_x[i] @ winv.T @ up_y[j].T
    return g


def fd_resolvent_columns(box, energy, columns):
    """Columns of ``(H_h - E)^{-1}`` for the given global indices (``j N + i``)."""
    size = box.grid().size * box.n_channels
    rhs = np.zeros((size, len(columns)))
    rhs[np.asarray(columns), np.arange(len(columns))] = 1.0
    return fd_solve(box, energy, rhs)


def nearest_eigenpair(box, target, radius, tol_eig=TOL_EIG, iterations=3):
    """FD eigenpair closest to ``target`` among eigenvalues within ``radius``.

    The eigenvalue comes from inertia bisection, the vector from inverse
    iteration at a shift just off it. The vector is normalized in the mesh L2
    norm ``h sum |psi|^2 = 1`` and returned with shape ``(points, N)``.
    """
    vals = box_eigenvalues_fd(box, (target - radius, target + radius), tol_eig)
    if len(vals) == 0:
        raise EigenvalueNotFound(f"no eigenvalue within {radius} of {target}")
    lam = float(vals[np.argmin(np.abs(vals - target))])
    n = box.n_channels
    size = box.grid().size * n
    # fixed start vector keeps the result reproducible
    v = np.random.default_rng(0).standard_normal(size)
    shift = lam + 10 * tol_eig * max(1.0, abs(lam))
    for _ in range(iterations):
        v = fd_solve(box, shift, v)
        v /= np.linalg.norm(v)
    psi = v / np.sqrt(box.mesh)
    return lam, psi.reshape(-1, n)


def fd_solve(box, energy, rhs):
    """Solve ``(H_h - E) x = rhs`` with a banded LU factorization."""
    ab = box.fd_banded()
    n = box.n_channels
    size = ab.shape[1]
    full = np.zeros((2 * n + 1, size))
    for d in range(n + 1):
        full[n + d, : size - d] = ab[d, : size - d]
        full[n - d, d:] = ab[d, : size - d]
    full[n] -= energy
    return sla.solve_banded((n, n), full, rhs)
