"""Integrated density of states from finite-box eigenvalue counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .box import DEFAULT_POINTS_PER_CELL, BoxOperator, box_eigenvalues_shooting
from .stats import linear_fit


@dataclass(frozen=True)
class IDSCurve:
    """``N(E)`` per unit length on an energy grid, averaged over realizations."""

    energies: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    half_cells: int
    samples: int
    mesh: float
    method: str = "fd"

    @property
    def ci(self):
        return self.values - 1.96 * self.stderr, self.values + 1.96 * self.stderr

    def is_monotone(self):
        return bool(np.all(np.diff(self.values) >= 0)) and bool(np.all(self.values >= 0))


def _counts_shooting(box, energies):
    lo = box.lower_bound() - 1.0
    roots = box_eigenvalues_shooting(box, (lo, float(np.max(energies)) + 1e-9))
    return np.searchsorted(roots, energies, side="left")


def ids_estimate(cfg, energies, half_cells, samples, seed, method="fd",
                 points_per_cell=DEFAULT_POINTS_PER_CELL):
    """Average of ``#{eigenvalues < E} / (2 ell L)`` over independent boxes."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    e = np.sort(np.asarray(energies, dtype=float))
    rows = []
    box = None
    for s in range(samples):
        box = BoxOperator.sample(cfg, half_cells, seed, "ids", s, points_per_cell=points_per_cell)
        if method == "fd":
            counts = box.count_eigenvalues_below(e)
        elif method == "shooting":
            counts = _counts_shooting(box, e)
        else:
            raise ValueError(f"unknown method {method!r}")
        rows.append(counts / box.length)
    rows = np.array(rows, dtype=float)
    mean = rows.mean(axis=0)
    err = rows.std(axis=0, ddof=1) / np.sqrt(samples) if samples > 1 else np.zeros_like(mean)
    return IDSCurve(e, mean, err, half_cells, samples, box.mesh, method)


@dataclass(frozen=True)
class HolderFit:
    alpha: float
    log_constant: float
    r2: float
    degenerate: bool = False


def holder_fit(curve, subinterval, max_lag=None):
    """Hölder exponent from the modulus of continuity on a subinterval.

    For each lag ``k`` the largest increment ``|N(E_{i+k}) - N(E_i)|`` is
    taken; the exponent is the slope of its log against ``log(k dE)``.
    Lags run up to a quarter of the points in the subinterval by default.
    """
    e = np.asarray(curve.energies)
    v = np.asarray(curve.values)
    lo, hi = subinterval
    mask = (e >= lo) & (e <= hi)
    e, v = e[mask], v[mask]
    if len(e) < 10:
        raise ValueError("need at least 10 grid points in the subinterval")
    if np.all(np.diff(v) == 0):
        return HolderFit(float("nan"), float("nan"), 0.0, True)
    max_lag = max_lag or max(2, len(e) // 4)
    lags, mods = [], []
    for k in range(1, max_lag + 1):
        inc = np.abs(v[k:] - v[:-k])
        de = np.abs(e[k:] - e[:-k])
        if inc.max() > 0:
            lags.append(de.mean())
            mods.append(inc.max())
    if len(lags) < 2:
        return HolderFit(float("nan"), float("nan"), 0.0, True)
    slope, intercept, r2, _ = linear_fit(np.log(lags), np.log(mods))
    return HolderFit(slope, intercept, r2)
