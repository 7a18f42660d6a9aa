"""Finite-box Monte-Carlo probes and deterministic solution-bound checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .box import (
    DEFAULT_POINTS_PER_CELL, TOL_EIG, BoxOperator, fd_resolvent_columns, nearest_eigenpair,
)
from .errors import ResolutionError
from .stats import ProbeReport, linear_fit
from .symplectic import exp_hamiltonian_blocks


def wegner_probe(cfg, energy, half_cells, kappa, beta, trials, seed,
                 points_per_cell=DEFAULT_POINTS_PER_CELL):
    """Frequency of ``dist(E, spectrum of the box) <= exp(-kappa (ell L)^beta)``.

    The distance event is decided exactly for the FD matrix by counting
    eigenvalues in ``[E - eta, E + eta]`` with two inertia counts.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    eta = float(np.exp(-kappa * (cfg.cell_length * half_cells) ** beta))
    hits = 0
    for t in range(trials):
        box = BoxOperator.sample(cfg, half_cells, seed, "wegner", half_cells, t,
                                 points_per_cell=points_per_cell)
        lo, hi = box.count_eigenvalues_below([energy - eta, energy + eta])
        hits += int(hi > lo)
    return ProbeReport("spectrum within exp(-kappa (ell L)^beta) of E", trials, hits,
                       {"E": energy, "L": half_cells, "kappa": kappa, "beta": beta,
                        "eta": eta, "seed": seed, "h": cfg.cell_length / points_per_cell})


def _band_indices(box, inner, outer):
    """Global FD indices of mesh points with ``inner <= |x| <= outer``."""
    x = box.grid()
    pts = np.flatnonzero((np.abs(x) >= inner - 1e-12) & (np.abs(x) <= outer + 1e-12))
    n = box.n_channels
    return (pts[:, None] * n + np.arange(n)).ravel()


def masked_resolvent_norm(box, energy):
    """Spectral norm of the resolvent from the middle third to the outer two-cell band."""
    ell, big_l = box.cfg.cell_length, box.half_cells
    cols = _band_indices(box, 0.0, ell * big_l / 3)
    rows = _band_indices(box, ell * (big_l - 2), ell * big_l)
    r = fd_resolvent_columns(box, energy, cols)
    return float(np.linalg.norm(r[rows], 2))


def good_box_probe(cfg, energy, gamma, half_cells, trials, seed,
                   points_per_cell=DEFAULT_POINTS_PER_CELL, tol_eig=TOL_EIG):
    """Frequency of ``|1_out R(E) 1_in| <= exp(-gamma ell L / 3)``.

    Realizations with an eigenvalue within ``tol_eig`` of ``E`` count as not
    good and are tallied in the ``near-spectrum`` parameter.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if half_cells % 3 or half_cells < 3:
        raise ValueError("half_cells must be a positive multiple of 3")
    threshold = np.exp(-gamma * cfg.cell_length * half_cells / 3)
    good = near = singular = 0
    norms = []
    for t in range(trials):
        box = BoxOperator.sample(cfg, half_cells, seed, "good-box", half_cells, t,
                                 points_per_cell=points_per_cell)
        d = tol_eig * max(1.0, abs(energy))
        lo, hi = box.count_eigenvalues_below([energy - d, energy + d])
        if hi > lo:
            near += 1
            continue
        try:
            val = masked_resolvent_norm(box, energy)
        except np.linalg.LinAlgError:
            singular += 1
            continue
        norms.append(val)
        good += int(val <= threshold)
    flags = ("singular-solve",) if singular else ()
    return ProbeReport("masked resolvent below exp(-gamma ell L / 3)", trials, good,
                       {"E": energy, "L": half_cells, "gamma": gamma, "threshold": threshold,
                        "near_spectrum": near, "singular": singular, "seed": seed,
                        "median_norm": float(np.median(norms)) if norms else float("nan"),
                        "h": cfg.cell_length / points_per_cell}, flags)


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay rate of cell-window norms of an eigenfunction."""

    rate: float
    stderr: float
    eigenvalue: float
    centers: np.ndarray = field(repr=False)
    log_norms: np.ndarray = field(repr=False)
    used: np.ndarray = field(repr=False)
    r2: float = float("nan")
    comparisons: dict = field(default_factory=dict)

    @property
    def ci(self):
        return self.rate - 1.96 * self.stderr, self.rate + 1.96 * self.stderr


def window_norms(box, psi):
    """``|1_x psi|`` over ``[x - ell, x + ell]`` for ``x`` at interior cell boundaries."""
    x = box.grid()
    ell = box.cfg.cell_length
    dens = box.mesh * np.sum(psi**2, axis=1)
    centers = box.cell_boundaries()[1:-1]
    cum = np.concatenate([[0.0], np.cumsum(dens)])
    lo = np.searchsorted(x, centers - ell - 1e-12, side="left")
    hi = np.searchsorted(x, centers + ell + 1e-12, side="right")
    return centers, np.sqrt(cum[hi] - cum[lo])


def eigenfunction_decay(box, energy, window_radius, core_mass=0.2, fit_region=None,
                        floor=1e-12, gammas=None):
    """Fit ``log |1_x psi| ~ -m |x - x_peak|`` on the tails of the nearest eigenfunction.

    Excluded from the fit: windows inside the smallest interval around the peak
    holding ``core_mass`` of the mass, windows touching a wall, and windows
    whose norm is below ``floor`` (rounding level). ``fit_region`` restricts the
    fit to an ``(a, b)`` range of centers. ``gammas`` maps labels to exponents
    to be reported next to the fitted rate.
    """
    lam, psi = nearest_eigenpair(box, energy, window_radius)
    centers, norms = window_norms(box, psi)
    ell = box.cfg.cell_length
    peak = centers[int(np.argmax(norms))]
    dist = np.abs(centers - peak)
    # core: smallest symmetric neighbourhood of the peak with the requested mass
    x = box.grid()
    dens = box.mesh * np.sum(psi**2, axis=1)
    order = np.argsort(np.abs(x - peak), kind="stable")
    radius = np.abs(x - peak)[order][np.searchsorted(np.cumsum(dens[order]), core_mass)]
    use = (dist > radius) & (norms > floor * norms.max())
    use &= np.abs(centers) <= box.half_length - 2 * ell
    if fit_region is not None:
        use &= (centers >= fit_region[0]) & (centers <= fit_region[1])
    if use.sum() < 3:
        raise ValueError("too few windows left for a decay fit")
    slope, _, r2, err = linear_fit(dist[use], np.log(norms[use]))
    comps = {}
    for key, g in (gammas or {}).items():
        comps[key] = float(g)
    with np.errstate(divide="ignore"):
        log_norms = np.log(norms)
    return DecayFit(-slope, err, lam, centers, log_norms, use, r2, comps)


@dataclass(frozen=True)
class SolutionBoundReport:
    trials: int
    growth_violations: int
    local_violations: int
    worst_growth_ratio: float
    worst_local_ratio: float
    local_constant: float

    @property
    def passed(self):
        return self.growth_violations == 0 and self.local_violations == 0


def local_l2_constant(cell_length, potential_norm):
    """Constant ``C`` of the local lower bound for a potential with ``|V|_{ell,u} = potential_norm``.

    The exponential factor uses ``2 max(1, ell)`` for the integral of the
    identity over a ``2 ell`` window; for ``ell <= 1`` that is the usual ``2``.
    """
    expo = 2 * max(1.0, cell_length) + 2 * potential_norm
    c1, c2 = np.exp(-expo), np.exp(expo)
    c3, c4 = np.sqrt(c1 / 2), np.sqrt(2 * c2)
    return c3**2 / 16 * min(2 * cell_length, c3 / (2 * c4))


class _Solution:
    """Vector solution of ``-u'' + (V - E) u = 0`` evaluated in closed form per cell."""

    def __init__(self, box, energy, y, data):
        self.box = box
        self.ell = box.cfg.cell_length
        self.pots = box.cell_potentials(energy)
        edges = box.cell_boundaries()
        self.edges = edges
        n = len(self.pots)
        k0 = min(int(np.floor((y - edges[0]) / self.ell)), n - 1)
        states = np.zeros((n + 1, len(data)))
        # state at the start of cell k0 from the data at y, then both directions
        states[k0] = exp_hamiltonian_blocks(self.pots[k0], -(y - edges[k0])) @ data
        for k in range(k0, n):
            states[k + 1] = exp_hamiltonian_blocks(self.pots[k], self.ell) @ states[k]
        for k in range(k0 - 1, -1, -1):
            states[k] = exp_hamiltonian_blocks(self.pots[k], -self.ell) @ states[k + 1]
        self.states = states

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.clip(np.floor((t - self.edges[0]) / self.ell).astype(int), 0, len(self.pots) - 1)
        props = exp_hamiltonian_blocks(self.pots[k], t - self.edges[k])
        return np.einsum("kij,kj->ki", props, self.states[k])

    def energy_norm(self, t):
        s = self(t)
        return np.sum(s**2, axis=1)

    def local_l2(self, a, b, nodes=24):
        """``int_a^b |u|^2`` by Gauss-Legendre on each cell piece; also a 2x-node check."""
        n = self.box.n_channels
        cuts = np.unique(np.concatenate([[a, b], self.edges[(self.edges > a) & (self.edges < b)]]))

        def quad(q):
            xg, wg = np.polynomial.legendre.leggauss(q)
            total = 0.0
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                t = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
                total += 0.5 * (hi - lo) * np.dot(wg, np.sum(self(t)[:, :n] ** 2, axis=1))
            return total

        return quad(nodes), quad(2 * nodes)

    def growth_exponent(self, x, y):
        """``int_min^max |V(t) + I|`` with ``V`` the cell matrices ``M - E``."""
        lo, hi = min(x, y), max(x, y)
        n = self.box.n_channels
        norms = np.linalg.norm(self.pots + np.eye(n), 2, axis=(-2, -1))
        overlap = np.clip(np.minimum(hi, self.edges[1:]) - np.maximum(lo, self.edges[:-1]), 0, None)
        return float(np.dot(norms, overlap))


def solution_bound_check(box, energy, trials, seed, pairs_per_trial=8, rel_tol=1e-12,
                         quad_tol=1e-10):
    """Test both solution-norm inequalities on random solutions of the box's equation.

    For each trial a solution is started from random Gaussian data
    ``(u(y), u'(y))``. The growth bound is tested at random ``(x, y)`` pairs;
    the local lower bound ``int_{x-ell}^{x+ell} |u|^2 >= C (|u(x)|^2 + |u'(x)|^2)``
    at random ``x`` with the explicit constant from :func:`local_l2_constant`.
    Quadrature that fails to converge raises :class:`ResolutionError`.
    """
    ell = box.cfg.cell_length
    n = box.n_channels
    vnorm = ell * float(np.linalg.norm(box.cell_potentials(energy), 2, axis=(-2, -1)).max())
    const = local_l2_constant(ell, vnorm)
    a, b = -box.half_length, box.half_length
    g_bad = l_bad = 0
    worst_g = 0.0
    worst_l = np.inf
    for t in range(trials):
        gen = rng.trial_generator(seed, "solution-bound", t)
        y0 = gen.uniform(a, b)
        sol = _Solution(box, energy, y0, gen.standard_normal(2 * n))
        xs = gen.uniform(a, b, pairs_per_trial)
        ys = gen.uniform(a, b, pairs_per_trial)
        ex, ey = sol.energy_norm(xs), sol.energy_norm(ys)
        for xi, yi, fx, fy in zip(xs, ys, ex, ey):
            bound = fy * np.exp(sol.growth_exponent(xi, yi))
            ratio = fx / bound
            worst_g = max(worst_g, ratio)
            g_bad += int(ratio > 1 + rel_tol)
        if b - a > 2 * ell:
            xl = gen.uniform(a + ell, b - ell, pairs_per_trial)
            for xi, fx in zip(xl, sol.energy_norm(xl)):
                lo_q, hi_q = sol.local_l2(xi - ell, xi + ell)
                if abs(lo_q - hi_q) > quad_tol * max(abs(hi_q), 1e-300):
                    raise ResolutionError("quadrature did not resolve the local L2 integral")
                ratio = hi_q / (const * fx)
                worst_l = min(worst_l, ratio)
                l_bad += int(ratio < 1 - rel_tol)
    return SolutionBoundReport(trials, g_bad, l_bad, worst_g, worst_l, const)
