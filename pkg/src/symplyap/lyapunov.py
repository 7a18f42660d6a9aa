"""Lyapunov spectra of the transfer-matrix cocycle and Monte-Carlo growth probes.

Exponents are reported per unit length: accumulated logs are divided by
``n * ell``. The per-step values are available as ``gamma * cell_length``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.special import logsumexp

from . import _kernels, rng
from .errors import DimensionError
from .model import MAX_TABLE_SIZE, sample_realization, site_matrices, transfer_table
from .stats import ProbeReport, batch_stderr, linear_fit, pairwise_sum
from .symplectic import exp_hamiltonian_blocks, wedge_power, wedge_vector

MIN_STEPS = 1000
MIN_BATCHES = 30


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Exponents ``gamma[0] >= ... >= gamma[2N-1]`` with batch-means errors.

    ``batch_sums`` keeps the per-batch accumulated logs (sorted like
    ``gamma``) so that errors of sums and differences can be formed from
    batchwise combinations, which accounts for their correlation.
    """

    gamma: np.ndarray
    stderr: np.ndarray
    steps: int
    energy: float
    cell_length: float
    seed: int
    batch_sums: np.ndarray = field(repr=False)
    batch_sizes: np.ndarray = field(repr=False)
    per_length: bool = True
    orthogonality_defect: float = 0.0

    @property
    def n_channels(self):
        return len(self.gamma) // 2

    @property
    def per_step(self):
        return self.gamma * self.cell_length

    def _combo_stderr(self, weights):
        vals = self.batch_sums @ np.asarray(weights, dtype=float)
        err = np.hypot(batch_stderr(vals, self.batch_sizes), _rounding_floor(len(self.gamma)))
        return float(err) / self.cell_length

    def gap(self, i):
        """``gamma[i] - gamma[i+1]`` and its standard error (0-based)."""
        w = np.zeros(len(self.gamma))
        w[i], w[i + 1] = 1.0, -1.0
        return float(self.gamma[i] - self.gamma[i + 1]), self._combo_stderr(w)

    def partial_sum(self, p):
        w = np.zeros(len(self.gamma))
        w[:p] = 1.0
        return float(self.gamma[:p].sum()), self._combo_stderr(w)

    def symmetry_defects(self):
        """``|gamma_i + gamma_{2N+1-i}|`` and ``3 (s_i + s_{2N+1-i})`` for ``i <= N``."""
        n = self.n_channels
        g, s = self.gamma, self.stderr
        defect = np.abs(g[:n] + g[::-1][:n])
        bound = 3 * (s[:n] + s[::-1][:n])
        return defect, bound

    def symmetric(self):
        defect, bound = self.symmetry_defects()
        return bool(np.all(defect <= bound))

    def rows(self):
        """CSV rows ``(E, i, gamma_i, stderr_i, n, seed)`` with 1-based ``i``."""
        return [(self.energy, i + 1, float(g), float(s), self.steps, self.seed)
                for i, (g, s) in enumerate(zip(self.gamma, self.stderr))]


@dataclass
class CocycleState:
    """Orthonormal frame plus running ``log|R_ii|`` sums."""

    frame: np.ndarray
    log_sums: np.ndarray
    steps: int = 0

    @classmethod
    def start(cls, dim, p=None):
        p = dim if p is None else p
        return cls(np.eye(dim)[:, :p].copy(), np.zeros(p), 0)


def _rounding_floor(dim):
    """Per-step error floor from rounding in each QR step.

    Batch means see only sampling noise; for a deterministic rotation that
    noise is pure rounding and the batch error collapses far below it.
    """
    return dim * np.finfo(float).eps


def _batch_edges(n, batches):
    return np.linspace(0, n, batches + 1).round().astype(np.int64)


def _cell_batches(cfg, energy, seed, n_steps, batches, labels, start=0):
    """Yield ``(table, codes)`` for consecutive batches of the realization."""
    edges = _batch_edges(n_steps, batches)
    small = cfg.support_size ** cfg.n_channels <= MAX_TABLE_SIZE
    table = transfer_table(cfg, energy) if small else None
    for a, b in zip(edges[:-1], edges[1:]):
        real = sample_realization(cfg, seed, (start + int(a), start + int(b)), *labels)
        if small:
            yield table, real.combined_codes()
        else:
            mats = exp_hamiltonian_blocks(site_matrices(cfg, real.cells, energy), cfg.cell_length)
            yield mats, np.arange(len(mats), dtype=np.int64)


def lyapunov_spectrum(cfg, energy, n_steps, seed, reorth_every=1, n_batches=50, labels=(),
                      p=None):
    """QR estimate of the top ``p`` (default all ``2N``) exponents at energy ``E``."""
    if n_steps < MIN_STEPS:
        raise ValueError(f"n_steps must be >= {MIN_STEPS}")
    if not np.isfinite(energy):
        raise ValueError("energy must be finite")
    if n_batches < MIN_BATCHES:
        raise ValueError(f"need at least {MIN_BATCHES} batches")
    dim = 2 * cfg.n_channels
    state = CocycleState.start(dim, p)
    sums = []
    sizes = np.diff(_batch_edges(n_steps, n_batches))
    worst = 0.0
    for table, codes in _cell_batches(cfg, energy, seed, n_steps, n_batches, labels):
        s, frame, dev = _kernels.qr_cocycle(table, codes, state.frame,
                                            np.array([0, len(codes)], dtype=np.int64),
                                            int(reorth_every))
        state.frame = frame
        state.log_sums += s[0]
        state.steps += len(codes)
        sums.append(s[0])
        worst = max(worst, dev)
    sums = np.array(sums)
    total = np.array([pairwise_sum(sums[:, j]) for j in range(sums.shape[1])])
    gamma = total / (n_steps * cfg.cell_length)
    err = np.hypot(batch_stderr(sums, sizes), _rounding_floor(dim)) / cfg.cell_length
    order = np.argsort(-gamma, kind="stable")
    return LyapunovSpectrum(gamma[order], err[order], int(n_steps), float(energy),
                            cfg.cell_length, int(seed), sums[:, order], sizes,
                            orthogonality_defect=float(worst))


@dataclass(frozen=True)
class GrowthEstimate:
    """Top exponent of an exterior-power cocycle, per unit length."""

    value: float
    stderr: float
    p: int
    steps: int
    samples: np.ndarray = field(default=None, repr=False)

    def mode(self):
        """Principal direction of the recorded unit vectors (sign-free)."""
        s = self.samples
        _, vecs = np.linalg.eigh(s.T @ s)
        return vecs[:, -1]

    def concentration(self, radius=0.1):
        """Fraction of samples within projective distance ``radius`` of the mode."""
        return float(np.mean(projective_distance(self.samples, self.mode()) <= radius))


def projective_distance(u, v):
    """Sine of the angle between the lines spanned by ``u`` and ``v`` (row-wise)."""
    u = np.atleast_2d(u)
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    v = np.asarray(v) / np.linalg.norm(v)
    c = np.clip(np.abs(u @ v), 0.0, 1.0)
    return np.sqrt(1.0 - c * c)


def _wedge_table(cfg, energy, p):
    t = transfer_table(cfg, energy)
    return np.array([wedge_power(m, p).entries for m in t])


def _check_order(cfg, p, upper):
    if not 1 <= p <= upper:
        raise DimensionError(f"exterior order p={p} outside [1, {upper}]")


def _vector_run(cfg, energy, p, n_steps, seed, labels, start_vec, burn, stride):
    table = _wedge_table(cfg, energy, p)
    real = sample_realization(cfg, seed, (0, n_steps), *labels)
    return _kernels.vector_cocycle(table, real.combined_codes(), start_vec, burn, stride)


def _mean_and_err(logs, batches, ell):
    edges = _batch_edges(len(logs), batches)
    sums = np.add.reduceat(logs, edges[:-1])
    value = pairwise_sum(logs) / (len(logs) * ell)
    err = np.hypot(batch_stderr(sums, np.diff(edges)), _rounding_floor(2))
    return value, float(err) / ell


def wedge_lyapunov_sum(cfg, energy, p, n_steps, seed, n_batches=50, labels=()):
    """``gamma_1 + ... + gamma_p`` as the growth rate of ``e_1 ^ ... ^ e_p``."""
    _check_order(cfg, p, cfg.n_channels)
    start = np.zeros(comb(2 * cfg.n_channels, p))
    start[0] = 1.0  # e_1 ^ ... ^ e_p is the first lexicographic basis vector
    logs, _, _ = _vector_run(cfg, energy, p, n_steps, seed, labels, start, n_steps, 1)
    value, err = _mean_and_err(logs, n_batches, cfg.cell_length)
    return GrowthEstimate(value, err, p, n_steps)


def furstenberg_integral_probe(cfg, energy, p, n_steps, seed, burn_in=0.1, n_batches=50,
                               stride=1, labels=()):
    """Ergodic average of ``log(|(^p T) x| / |x|)`` along a projective orbit.

    The first ``burn_in`` fraction of steps is discarded; the remaining unit
    vectors are returned as samples of the stationary direction law.
    """
    _check_order(cfg, p, cfg.n_channels)
    g = rng.trial_generator(seed, "furstenberg", *labels)
    frame = np.linalg.qr(g.standard_normal((2 * cfg.n_channels, p)))[0]
    start = wedge_vector(frame)
    burn = int(round(burn_in * n_steps))
    logs, _, samples = _vector_run(cfg, energy, p, n_steps, seed, labels, start, burn, stride)
    value, err = _mean_and_err(logs[burn:], n_batches, cfg.cell_length)
    return GrowthEstimate(value, err, p, n_steps - burn, samples)


def _unit_frame(x, dim, p):
    if x is None:
        return np.eye(dim)[:, :p].copy()
    f = np.asarray(x, dtype=float).reshape(dim, p)
    q, r = np.linalg.qr(f)
    return q * np.sign(np.diag(r))


def _trial_codes(cfg, seed, n, trials):
    return np.array([sample_realization(cfg, seed, (0, n), "trial", t).combined_codes()
                     for t in range(trials)])


def _propagate_frames(table, codes, frame, checkpoints=(), renorm_every=8):
    """Evolve one frame per trial; returns ``(frames, log|det R|)`` and checkpoint logs."""
    trials, n = codes.shape
    f = np.broadcast_to(frame, (trials,) + frame.shape).copy()
    logs = np.zeros(trials)
    marks = {}
    checkpoints = set(int(c) for c in checkpoints)
    for k in range(n):
        f = np.einsum("tij,tjk->tik", table[codes[:, k]], f)
        if (k + 1) % renorm_every == 0 or (k + 1) in checkpoints or k == n - 1:
            q, r = np.linalg.qr(f)
            d = np.diagonal(r, axis1=-2, axis2=-1)
            logs += np.log(np.abs(d)).sum(axis=1)
            f = q * np.sign(d)[:, None, :]
            if (k + 1) in checkpoints:
                marks[k + 1] = logs.copy()
    return f, logs, marks


def large_deviation_probe(cfg, energy, p, n, eps, trials, seed, x=None, y=None,
                          gamma_sum=None, gamma_steps=200_000):
    """Frequency of ``|<(^p U_n) x, y>| >= exp((gamma_1 + ... + gamma_p - eps) ell n)``.

    ``x`` and ``y`` are given as ``2N x p`` frames (their wedges are the unit
    decomposable vectors); defaults are ``e_1 ^ ... ^ e_p``. When
    ``gamma_sum`` is not supplied it is estimated with a separate seed.
    """
    _check_order(cfg, p, cfg.n_channels)
    dim = 2 * cfg.n_channels
    xf, yf = _unit_frame(x, dim, p), _unit_frame(y, dim, p)
    if gamma_sum is None:
        spec = lyapunov_spectrum(cfg, energy, gamma_steps, rng.derive_seed(seed, "rate"))
        gamma_sum = float(spec.gamma[:p].sum())
    table = transfer_table(cfg, energy)
    codes = _trial_codes(cfg, seed, n, trials)
    f, logs, _ = _propagate_frames(table, codes, xf)
    # <(^p U) x, y> = det(y^T U x) by Cauchy-Binet
    overlap = np.linalg.det(np.einsum("ji,tjk->tik", yf, f))
    with np.errstate(divide="ignore"):
        log_inner = logs + np.log(np.abs(overlap))
    threshold = (gamma_sum - eps) * cfg.cell_length * n
    hits = int(np.sum(log_inner >= threshold))
    return ProbeReport(
        "large-deviation lower bound", trials, hits,
        {"E": energy, "p": p, "n": n, "eps": eps, "gamma_sum": gamma_sum, "seed": seed},
    )


@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean of ``|(^p U_n) x|^-delta`` with checkpoints for a rate fit."""

    n: int
    delta: float
    log_mean: float
    log_stderr: float
    checkpoints: np.ndarray
    log_means: np.ndarray
    slope: float
    trials: int

    @property
    def estimate(self):
        return float(np.exp(self.log_mean))

    @property
    def rate(self):
        """Empirical decay rate per step (negated slope of log-mean vs n)."""
        return -self.slope


def negative_moment_probe(cfg, energy, p, delta, n, trials, seed, x=None, checkpoints=None):
    if not delta > 0:
        raise ValueError("delta must be > 0")
    _check_order(cfg, p, cfg.n_channels)
    dim = 2 * cfg.n_channels
    xf = _unit_frame(x, dim, p)
    if checkpoints is None:
        checkpoints = np.unique(np.linspace(max(1, n // 5), n, 5).round().astype(int))
    checkpoints = np.asarray(sorted(set(int(c) for c in checkpoints) | {n}))
    table = transfer_table(cfg, energy)
    codes = _trial_codes(cfg, seed, n, trials)
    _, logs, marks = _propagate_frames(table, codes, xf, checkpoints)
    marks[n] = logs

    def log_mean(lg):
        return float(logsumexp(-delta * lg) - np.log(len(lg)))

    log_means = np.array([log_mean(marks[c]) for c in checkpoints])
    # delta method for the log of a sample mean
    w = np.exp(-delta * logs - log_means[-1])
    log_err = float(np.std(w, ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    slope = linear_fit(checkpoints, log_means)[0] if len(checkpoints) > 1 else float("nan")
    return MomentEstimate(n, delta, log_means[-1], log_err, checkpoints, log_means, slope, trials)


def lyapunov_holder_diagnostic(cfg, energy, offsets, n_steps, seed, index=0):
    """Log-log slope of ``|gamma_i(E + t) - gamma_i(E)|`` against ``t``.

    All energies share one disorder realization so the differences are not
    swamped by independent sampling noise.
    """
    base = lyapunov_spectrum(cfg, energy, n_steps, seed).gamma[index]
    offsets = np.asarray(offsets, dtype=float)
    diffs = np.array([abs(lyapunov_spectrum(cfg, energy + t, n_steps, seed).gamma[index] - base)
                      for t in offsets])
    keep = diffs > 0
    slope, intercept, r2, _ = linear_fit(np.log(np.abs(offsets[keep])), np.log(diffs[keep]))
    return slope, intercept, r2
