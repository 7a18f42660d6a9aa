import numpy as np
import pytest

from symplyap.box import BoxOperator, box_eigenvalues_fd
from symplyap.errors import ResolutionError
from symplyap.ids import IDSCurve, holder_fit, ids_estimate
from symplyap.model import ModelConfig, energy_window
from symplyap.probes import (
    eigenfunction_decay, good_box_probe, local_l2_constant, solution_bound_check, wegner_probe,
)


def free_config(n, ell=0.5):
    return ModelConfig.deterministic(n, ell, couplings=(0.0,) * n, allow_zero_coupling=True)


# ---------------------------------------------------------------- IDS

def test_ids_zero_below_spectrum_and_monotone():
    cfg = ModelConfig.bernoulli(2, 0.5)
    c = ids_estimate(cfg, np.linspace(-3, 10, 60), 8, 4, 1)
    assert np.all(c.values[c.energies < -1] == 0)
    assert c.is_monotone()
    lo, hi = c.ci
    assert np.all(lo <= c.values) and np.all(c.values <= hi)


def test_ids_free_single_channel_oracle():
    cfg = free_config(1)
    e = np.linspace(1, 20, 20)
    c = ids_estimate(cfg, e, 100, 1, 0)  # ell L = 50
    assert np.max(np.abs(c.values - np.sqrt(e) / np.pi) / (np.sqrt(e) / np.pi)) <= 0.04


def test_ids_free_error_halves_when_length_doubles():
    cfg = free_config(1)
    e = np.linspace(1, 20, 40)
    exact = np.sqrt(e) / np.pi
    errs = [np.mean(np.abs(ids_estimate(cfg, e, L, 1, 0).values - exact)) for L in (25, 50, 100)]
    assert errs[1] <= 0.6 * errs[0] and errs[2] <= 0.6 * errs[1]


def test_ids_backends_agree_within_ci():
    cfg = ModelConfig.bernoulli(1, 0.5)
    e = np.linspace(0.2, 6, 12)
    fd = ids_estimate(cfg, e, 6, 6, 2)
    sh = ids_estimate(cfg, e, 6, 6, 2, method="shooting")
    # same boxes, so the counts agree except where an eigenvalue sits within mesh error of E
    assert np.all(np.abs(fd.values - sh.values) <= 1.96 * np.hypot(fd.stderr, sh.stderr) + 1e-12)


def test_ids_rejects_bad_arguments():
    with pytest.raises(ValueError):
        ids_estimate(free_config(1), [1.0], 4, 0, 0)
    with pytest.raises(ValueError):
        ids_estimate(free_config(1), [1.0], 4, 1, 0, method="magic")


def test_holder_fit_closed_form_curves():
    e = np.linspace(5, 15, 101)
    smooth = IDSCurve(e, np.sqrt(e) / np.pi, 0 * e, 0, 1, 0.0)
    assert 0.9 <= holder_fit(smooth, (5, 15)).alpha <= 1.1
    e = np.linspace(0, 1, 101)
    root = IDSCurve(e, np.sqrt(e) / np.pi, 0 * e, 0, 1, 0.0)
    assert holder_fit(root, (0, 0.2)).alpha == pytest.approx(0.5, abs=0.02)


def test_holder_fit_computed_free_curve():
    c = ids_estimate(free_config(1), np.linspace(5, 15, 101), 400, 1, 0)
    assert 0.9 <= holder_fit(c, (5, 15)).alpha <= 1.1


def test_holder_fit_degenerate_and_short():
    e = np.linspace(0, 1, 20)
    flat = IDSCurve(e, np.full_like(e, 0.3), 0 * e, 0, 1, 0.0)
    assert holder_fit(flat, (0, 1)).degenerate
    with pytest.raises(ValueError):
        holder_fit(flat, (0, 0.2))


# ---------------------------------------------------------------- Wegner

def test_wegner_deterministic_is_zero_or_one():
    cfg = ModelConfig.deterministic(2, 0.5, value=1)
    r = wegner_probe(cfg, 0.5, 8, 1.0, 0.5, 20, 0)
    assert r.successes in (0, r.trials)
    assert "few-trials" in r.flags


def test_wegner_argument_checks():
    cfg = ModelConfig.bernoulli(2, 0.5)
    with pytest.raises(ValueError):
        wegner_probe(cfg, 0.5, 8, 1.0, 1.0, 10, 0)
    with pytest.raises(ValueError):
        wegner_probe(cfg, 0.5, 8, 0.0, 0.5, 10, 0)


def test_wegner_estimate_in_unit_interval():
    r = wegner_probe(ModelConfig.bernoulli(2, 0.6), 0.5, 8, 1.0, 0.5, 30, 0)
    assert 0.0 <= r.estimate <= 1.0


# ---------------------------------------------------------------- good boxes

def test_good_box_free_below_spectrum():
    r = good_box_probe(free_config(1), -1.0, 0.5, 12, 5, 0)
    assert r.estimate == 1.0


def test_good_box_argument_checks():
    cfg = ModelConfig.bernoulli(1, 0.5)
    with pytest.raises(ValueError):
        good_box_probe(cfg, 0.5, 0.0, 12, 5, 0)
    with pytest.raises(ValueError):
        good_box_probe(cfg, 0.5, 0.1, 13, 5, 0)


def test_good_box_on_eigenvalue_counts_as_not_good():
    cfg = free_config(1)
    box = BoxOperator.sample(cfg, 6, 0)
    lam = box_eigenvalues_fd(box, (0.0, 2.0))[0]
    r = good_box_probe(cfg, lam, 0.1, 6, 2, 0)
    assert r.estimate == 0.0 and r.parameters["near_spectrum"] == 2


# ---------------------------------------------------------------- decay

def test_free_eigenfunction_does_not_decay():
    box = BoxOperator.sample(free_config(1), 16, 0)
    for e in (0.5, 2.0, 5.0):
        assert -0.05 <= eigenfunction_decay(box, e, 0.5).rate <= 0.05


def test_barrier_decay_rate():
    barrier = 10.0
    cfg = ModelConfig.deterministic(1, 0.5, couplings=(barrier,))
    cells = np.array([[0.0]] * 16 + [[1.0]] * 16)
    box = BoxOperator.from_cells(cfg, cells)
    fit = eigenfunction_decay(box, 0.15, 0.5, fit_region=(0.5, 6.5),
                              gammas={"gamma_1": 1.0, "gamma_N": 1.0})
    assert fit.rate == pytest.approx(np.sqrt(barrier - fit.eigenvalue), rel=0.05)
    assert set(fit.comparisons) == {"gamma_1", "gamma_N"}


def test_disordered_decay_positive_single_channel():
    cfg = ModelConfig.bernoulli(1, 0.5, couplings=(3.0,))
    box = BoxOperator.sample(cfg, 64, 1)
    fit = eigenfunction_decay(box, energy_window(cfg).center, 0.5)
    assert fit.ci[0] > 0


# ---------------------------------------------------------------- solution bounds

def test_solution_bounds_zero_potential():
    r = solution_bound_check(BoxOperator.sample(free_config(1), 4, 0), 0.0, 20, 0)
    assert r.passed
    assert r.worst_local_ratio > 10


def test_solution_bounds_constant_potential_saturates_growth():
    # v = 1, E = 0: |V + I| = 2, the growth factor is exp(2 |x - y|) and u = e^x attains it
    cfg = ModelConfig.deterministic(1, 0.5, value=1)
    r = solution_bound_check(BoxOperator.sample(cfg, 6, 0), 0.0, 20, 0)
    assert r.passed
    assert r.worst_growth_ratio > 0.99


@pytest.mark.parametrize("n", [1, 2, 3])
def test_solution_bounds_disordered(n):
    cfg = ModelConfig.bernoulli(n, 0.1)
    r = solution_bound_check(BoxOperator.sample(cfg, 20, n), 0.5, 10, n)
    assert r.passed


def test_solution_bounds_resolution_error():
    cfg = ModelConfig.deterministic(1, 1.0, couplings=(3000.0,), value=1)
    with np.errstate(over="ignore", divide="ignore"):
        with pytest.raises(ResolutionError):
            solution_bound_check(BoxOperator.sample(cfg, 3, 0), 0.0, 3, 0)


def test_local_constant_decreases_with_potential():
    assert local_l2_constant(0.5, 0.0) > local_l2_constant(0.5, 1.0) > 0
