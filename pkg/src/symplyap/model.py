"""The random operator ``-d^2/dx^2 + V0 + sum_n diag(c_i w_i^(n)) 1_[ln, l(n+1))``.

Holds the model configuration, disorder sampling, single-cell matrices and
transfer matrices, and the admissible energy window derived from the extreme
eigenvalues of the single-site matrices over ``{0,1}^N``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import rng
from .errors import CapacityError, DimensionError
from .symplectic import (
    TOL_SYMP, HamiltonianMatrix, exp_hamiltonian_blocks,
    matrix_exponential,
)

MAX_ENUM_CHANNELS = 20
# largest support^N for which a full per-energy transfer table is built
MAX_TABLE_SIZE = 1 << 12


def _as_tuple(x):
    return tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ModelConfig:
    """Full description of the random operator on one strip of N channels.

    ``log_chart_radius`` is the radius ``d`` of the log-chart ball around the
    identity in Sp_N; it is not computable and enters as a parameter.
    ``allow_zero_coupling`` admits ``c_i = 0`` for free-operator oracles.
    """

    n_channels: int
    cell_length: float
    couplings: tuple
    disorder_support: tuple = (0.0, 1.0)
    disorder_weights: tuple = (0.5, 0.5)
    log_chart_radius: float = 1.0
    allow_zero_coupling: bool = False
    tol_symp: float = TOL_SYMP

    def __post_init__(self):
        object.__setattr__(self, "couplings", _as_tuple(self.couplings))
        object.__setattr__(self, "disorder_support", _as_tuple(self.disorder_support))
        object.__setattr__(self, "disorder_weights", _as_tuple(self.disorder_weights))
        n = int(self.n_channels)
        object.__setattr__(self, "n_channels", n)
        if n < 1:
            raise ValueError("n_channels must be >= 1")
        if not self.cell_length > 0:
            raise ValueError("cell_length must be > 0")
        if len(self.couplings) != n:
            raise DimensionError(f"expected {n} couplings, got {len(self.couplings)}")
        if not self.allow_zero_coupling and any(c == 0 for c in self.couplings):
            raise ValueError("couplings must be nonzero")
        if len(self.disorder_support) != len(self.disorder_weights):
            raise DimensionError("disorder_support and disorder_weights differ in length")
        w = np.array(self.disorder_weights)
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("disorder_weights must be nonnegative and sum to 1")
        if not {0.0, 1.0} <= set(self.disorder_support):
            raise ValueError("disorder_support must contain 0 and 1")
        if len(set(self.disorder_support)) != len(self.disorder_support):
            raise ValueError("disorder_support has repeated points")
        if not self.log_chart_radius > 0:
            raise ValueError("log_chart_radius must be > 0")

    @classmethod
    def bernoulli(cls, n_channels, cell_length, couplings=None, log_chart_radius=1.0, p=0.5):
        if couplings is None:
            couplings = np.ones(n_channels)
        return cls(n_channels, cell_length, couplings, (0.0, 1.0), (1 - p, p), log_chart_radius)

    @classmethod
    def deterministic(cls, n_channels, cell_length, couplings=None, value=0.0,
                      log_chart_radius=1.0, allow_zero_coupling=False):
        """Point-mass law at ``value`` (0 or 1), kept on the support ``{0, 1}``."""
        if value not in (0, 1):
            raise ValueError("deterministic value must be 0 or 1")
        if couplings is None:
            couplings = np.ones(n_channels)
        w = (1.0, 0.0) if value == 0 else (0.0, 1.0)
        return cls(n_channels, cell_length, couplings, (0.0, 1.0), w, log_chart_radius,
                   allow_zero_coupling)

    @property
    def is_deterministic(self):
        return sum(1 for w in self.disorder_weights if w > 0) == 1

    @property
    def support_size(self):
        return len(self.disorder_support)

    @property
    def free_matrix(self):
        """Tridiagonal ``V0`` with zero diagonal and unit off-diagonals."""
        n = self.n_channels
        return np.eye(n, k=1) + np.eye(n, k=-1)

    def to_dict(self):
        return {
            "n_channels": self.n_channels,
            "cell_length": self.cell_length,
            "couplings": list(self.couplings),
            "disorder_support": list(self.disorder_support),
            "disorder_weights": list(self.disorder_weights),
            "log_chart_radius": self.log_chart_radius,
        }


@dataclass(frozen=True)
class DisorderRealization:
    """Disorder values on cells ``start .. stop-1``.

    ``codes[k, i]`` is the index into the support for channel ``i`` of cell
    ``start + k``; ``cells`` holds the corresponding values.
    """

    seed: int
    start: int
    codes: np.ndarray
    support: tuple
    labels: tuple = ()

    def __post_init__(self):
        c = np.array(self.codes, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "codes", c)

    @property
    def stop(self):
        return self.start + len(self.codes)

    @property
    def cells(self):
        return np.asarray(self.support)[self.codes]

    def combined_codes(self):
        """Mixed-radix index of each cell's full vector (channel 0 least significant)."""
        k = len(self.support)
        radix = k ** np.arange(self.codes.shape[1], dtype=np.int64)
        return self.codes @ radix

    def cell(self, n):
        if not self.start <= n < self.stop:
            raise IndexError(f"cell {n} outside [{self.start}, {self.stop})")
        return self.cells[n - self.start]


@dataclass(frozen=True)
class EnergyWindow:
    """Admissible energies ``[lambda_max - d/ell, lambda_min + d/ell]``.

    ``empty`` follows the critical length rule ``ell >= ell_c`` with
    ``ell_c = min(1, d / delta0)``; ``interval_empty`` reports whether the
    endpoints themselves cross.
    """

    lower: float
    upper: float
    lambda_min: float
    lambda_max: float
    delta0: float
    ell_c: float
    cell_length: float = field(default=float("nan"))

    @property
    def empty(self):
        return self.cell_length >= self.ell_c

    @property
    def interval_empty(self):
        return self.lower > self.upper

    @property
    def center(self):
        return 0.5 * (self.lambda_min + self.lambda_max)

    @property
    def length(self):
        return self.upper - self.lower

    def contains(self, e):
        return self.lower <= e <= self.upper

    def grid(self, k):
        return np.linspace(self.lower, self.upper, k)


def build_site_matrix(cfg, omega, energy):
    """``V0 + diag(c_i omega_i) - E I`` (symmetric N x N)."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if w.shape != (cfg.n_channels,):
        raise DimensionError(f"site vector needs {cfg.n_channels} components, got {w.shape}")
    return cfg.free_matrix + np.diag(np.asarray(cfg.couplings) * w) - energy * np.eye(cfg.n_channels)


def site_matrices(cfg, omegas, energy):
    """Batched :func:`build_site_matrix`; ``energy`` broadcasts against ``omegas[..., 0]``."""
    w = np.asarray(omegas, dtype=float)
    e = np.asarray(energy, dtype=float)
    n = cfg.n_channels
    shape = np.broadcast_shapes(w.shape[:-1], e.shape) + (n, n)
    out = np.broadcast_to(cfg.free_matrix, shape).copy()
    idx = np.arange(n)
    out[..., idx, idx] += w * np.asarray(cfg.couplings) - e[..., None]
    return out


def hamiltonian(cfg, omega, energy):
    """``X = [[0, I], [M, 0]]`` for one cell."""
    return HamiltonianMatrix.from_block(build_site_matrix(cfg, omega, energy), tol=cfg.tol_symp)


def transfer_matrix(cfg, omega, energy):
    """Propagator of ``(u, u')`` across one cell of length ``ell``."""
    return matrix_exponential(hamiltonian(cfg, omega, energy), cfg.cell_length, tol=cfg.tol_symp)


def support_vectors(cfg):
    """All support^N site vectors in mixed-radix order (channel 0 least significant)."""
    k = cfg.support_size
    n = cfg.n_channels
    codes = np.array(list(product(range(k), repeat=n)), dtype=np.int64)[:, ::-1]
    return np.asarray(cfg.disorder_support)[codes]


def transfer_table(cfg, energy):
    """Transfer matrices for every site vector, indexed by mixed-radix code."""
    size = cfg.support_size ** cfg.n_channels
    if size > MAX_TABLE_SIZE:
        raise CapacityError(f"transfer table of {size} entries exceeds {MAX_TABLE_SIZE}")
    return exp_hamiltonian_blocks(site_matrices(cfg, support_vectors(cfg), energy), cfg.cell_length)


def transfer_matrices_for(cfg, realization, energy):
    """Transfer matrices cell by cell for a realization, shape ``(cells, 2N, 2N)``."""
    size = cfg.support_size ** cfg.n_channels
    if size <= MAX_TABLE_SIZE:
        return transfer_table(cfg, energy)[realization.combined_codes()]
    return exp_hamiltonian_blocks(site_matrices(cfg, realization.cells, energy), cfg.cell_length)


def _binary_vectors(n, chunk):
    total = 1 << n
    bits = np.arange(n, dtype=np.int64)
    for a in range(0, total, chunk):
        idx = np.arange(a, min(total, a + chunk), dtype=np.int64)
        yield ((idx[:, None] >> bits) & 1).astype(float)


def binary_site_eigenvalues(cfg, energy=0.0, chunk=4096):
    """Yield eigenvalue blocks of ``M_w(E)`` over all ``w`` in ``{0,1}^N``."""
    if cfg.n_channels > MAX_ENUM_CHANNELS:
        raise CapacityError(f"2^N enumeration refused for N={cfg.n_channels} > {MAX_ENUM_CHANNELS}")
    for w in _binary_vectors(cfg.n_channels, chunk):
        yield np.linalg.eigvalsh(site_matrices(cfg, w, energy))


def eigenvalue_extremes(cfg):
    """``(lambda_min, lambda_max, delta0)`` over eigenvalues of ``M_w(0)``, ``w`` in ``{0,1}^N``."""
    lo, hi = np.inf, -np.inf
    for lam in binary_site_eigenvalues(cfg):
        lo = min(lo, float(lam[:, 0].min()))
        hi = max(hi, float(lam[:, -1].max()))
    return lo, hi, 0.5 * (hi - lo)


def energy_window(cfg):
    lam_min, lam_max, delta0 = eigenvalue_extremes(cfg)
    d = cfg.log_chart_radius
    ell_c = 1.0 if delta0 == 0 else min(1.0, d / delta0)
    ell = cfg.cell_length
    return EnergyWindow(lam_max - d / ell, lam_min + d / ell, lam_min, lam_max, delta0, ell_c, ell)


def hamiltonian_norm(m):
    """Spectral norm of ``[[0, I], [m, 0]]`` for symmetric ``m``: ``max(1, |eig m|)``."""
    lam = np.linalg.eigvalsh(np.atleast_2d(m))
    return max(1.0, float(np.abs(lam).max()))


def norm_bound_check(cfg, energy):
    """Whether ``ell * |X_w(E)| <= d`` for every ``w`` in ``{0,1}^N``.

    Returns ``(admissible, largest ell * |X_w(E)|)``.
    """
    worst = 0.0
    for lam in binary_site_eigenvalues(cfg, energy):
        worst = max(worst, float(np.abs(lam).max()))
    value = cfg.cell_length * max(1.0, worst)
    return value <= cfg.log_chart_radius, value


def sample_realization(cfg, seed, cell_range, *labels):
    """Disorder on ``range(*cell_range)``; cell ``n`` depends only on ``(seed, labels, n)``."""
    start, stop = cell_range
    if stop <= start:
        raise ValueError("cell range must be nonempty")
    key = rng.stream_key(seed, "disorder", *labels)
    u = rng.cell_uniforms(key, start, stop, cfg.n_channels)
    codes = rng.categorical(u, cfg.disorder_weights)
    return DisorderRealization(int(seed), int(start), codes, cfg.disorder_support, tuple(labels))


def lipschitz_constant(cfg, energies, step=1e-4):
    """Largest ``|T_w(E + step) - T_w(E)| / step`` over ``w`` in ``{0,1}^N`` and ``energies``.

    A finite-difference fit of the constant in ``|T(E) - T(E')| <= C0 |E - E'|``.
    """
    w = np.concatenate(list(_binary_vectors(cfg.n_channels, 1 << min(cfg.n_channels, 12))))
    best = 0.0
    for e in np.atleast_1d(energies):
        a = exp_hamiltonian_blocks(site_matrices(cfg, w, e), cfg.cell_length)
        b = exp_hamiltonian_blocks(site_matrices(cfg, w, e + step), cfg.cell_length)
        best = max(best, float(np.linalg.norm(b - a, 2, axis=(-2, -1)).max()) / step)
    return best
