"""Small statistics helpers: Wilson intervals, batch means, trend checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _st

MIN_TRIALS = 100


def wilson_interval(successes, trials, level=0.95):
    if trials <= 0:
        return 0.0, 1.0
    z = _st.norm.ppf(0.5 + level / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class ProbeReport:
    """Monte-Carlo frequency of an event with a Wilson 95% interval."""

    event: str
    trials: int
    successes: int
    parameters: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")
        flags = tuple(self.flags)
        if self.trials < MIN_TRIALS and "few-trials" not in flags:
            flags = flags + ("few-trials",)
        object.__setattr__(self, "flags", flags)

    @property
    def estimate(self):
        return self.successes / self.trials if self.trials else 0.0

    @property
    def interval(self):
        return wilson_interval(self.successes, self.trials)

    def to_json(self):
        lo, hi = self.interval
        return {
            "event": self.event,
            "trials": self.trials,
            "successes": self.successes,
            "estimate": self.estimate,
            "ci_low": lo,
            "ci_high": hi,
            "parameters": {k: _plain(v) for k, v in self.parameters.items()},
            "flags": list(self.flags),
        }


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return v


def batch_stderr(batch_values, batch_sizes=None):
    """Standard error of the overall mean from (possibly unequal) batch means.

    ``batch_values`` holds per-batch totals along axis 0; the estimate is the
    ratio of total to total size.
    """
    vals = np.asarray(batch_values, dtype=float)
    b = vals.shape[0]
    sizes = np.ones(b) if batch_sizes is None else np.asarray(batch_sizes, dtype=float)
    if b < 2:
        return np.full(vals.shape[1:], np.nan)
    shape = (-1,) + (1,) * (vals.ndim - 1)
    means = vals / sizes.reshape(shape)
    w = (sizes / sizes.sum()).reshape(shape)
    grand = (w * means).sum(axis=0)
    var = (w * (means - grand) ** 2).sum(axis=0) * b / (b - 1)
    return np.sqrt(var / b)


def pairwise_sum(x):
    """Order-independent (correctly rounded) sum."""
    return math.fsum(np.asarray(x, dtype=float).ravel())


def non_increasing_within_ci(reports):
    """True if each estimate is at most the upper CI bound of its predecessor."""
    return all(b.estimate <= a.interval[1] for a, b in zip(reports, reports[1:]))


def non_decreasing_within_ci(reports):
    return all(b.estimate >= a.interval[0] for a, b in zip(reports, reports[1:]))


def linear_fit(x, y):
    """Least-squares line; returns ``(slope, intercept, r2, slope_stderr)``."""
    res = _st.linregress(np.asarray(x, float), np.asarray(y, float))
    return float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr)
