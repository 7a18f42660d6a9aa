import numpy as np
import pytest

from symplyap.errors import DimensionError
from symplyap.lyapunov import (
    furstenberg_integral_probe, large_deviation_probe, lyapunov_holder_diagnostic,
    lyapunov_spectrum, negative_moment_probe, projective_distance, wedge_lyapunov_sum,
)
from symplyap.model import ModelConfig, energy_window


@pytest.fixture(scope="module")
def hyperbolic():
    # N = 1, omega = 0, c = 1, E = -1: M = [1], exponent exactly 1 per unit length
    return ModelConfig.deterministic(1, 0.5)


@pytest.fixture(scope="module")
def bernoulli2():
    return ModelConfig.bernoulli(2, 0.5)


def test_hyperbolic_exponent(hyperbolic):
    s = lyapunov_spectrum(hyperbolic, -1.0, 100_000, 0)
    assert s.gamma[0] == pytest.approx(1.0, abs=1e-4)
    assert s.gamma[1] == pytest.approx(-1.0, abs=1e-4)
    assert s.per_step[0] == pytest.approx(0.5, abs=1e-4)


def test_elliptic_exponent_is_zero(hyperbolic):
    s = lyapunov_spectrum(hyperbolic, 1.0, 20_000, 0)
    assert abs(s.gamma[0]) <= 3 * s.stderr[0]
    assert s.stderr[0] <= 1e-3


def test_argument_checks(hyperbolic):
    with pytest.raises(ValueError):
        lyapunov_spectrum(hyperbolic, 0.0, 999, 0)
    with pytest.raises(ValueError):
        lyapunov_spectrum(hyperbolic, np.inf, 1000, 0)
    with pytest.raises(ValueError):
        lyapunov_spectrum(hyperbolic, 0.0, 1000, 0, n_batches=10)
    with pytest.raises(DimensionError):
        wedge_lyapunov_sum(hyperbolic, 0.0, 2, 1000, 0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_symmetry_sorting_and_zero_sum(bernoulli2, seed):
    w = energy_window(bernoulli2)
    s = lyapunov_spectrum(bernoulli2, w.center + 0.3 * (seed - 2), 20_000, seed)
    assert np.all(np.diff(s.gamma) <= 0)
    assert s.symmetric()
    total, err = s.partial_sum(4)
    assert abs(total) <= 3 * err
    assert s.orthogonality_defect <= 1e-10


def test_reorthonormalization_interval_invariance(bernoulli2):
    runs = [lyapunov_spectrum(bernoulli2, 0.5, 30_000, 9, reorth_every=k) for k in (1, 5, 10)]
    for other in runs[1:]:
        # same realization, so the estimates agree far inside one standard error
        assert np.all(np.abs(other.gamma - runs[0].gamma) <= runs[0].stderr)


def test_same_seed_reproducible(bernoulli2):
    a = lyapunov_spectrum(bernoulli2, 0.5, 5000, 4)
    b = lyapunov_spectrum(bernoulli2, 0.5, 5000, 4)
    assert np.array_equal(a.gamma, b.gamma)


def test_rows_schema(bernoulli2):
    s = lyapunov_spectrum(bernoulli2, 0.5, 2000, 4)
    rows = s.rows()
    assert len(rows) == 4
    assert rows[0][:2] == (0.5, 1) and rows[0][4:] == (2000, 4)


def test_wedge_first_order_matches_top_exponent(bernoulli2):
    s = lyapunov_spectrum(bernoulli2, 0.5, 40_000, 5)
    g = wedge_lyapunov_sum(bernoulli2, 0.5, 1, 40_000, 6)
    assert abs(g.value - s.gamma[0]) <= 3 * np.hypot(g.stderr, s.stderr[0])


def test_wedge_sum_of_elliptic_channels_is_zero():
    # omega = 0, E = 2: M = V0 - 2 has eigenvalues -1 and -3, both elliptic
    cfg = ModelConfig.deterministic(2, 0.5)
    g = wedge_lyapunov_sum(cfg, 2.0, 2, 20_000, 0)
    assert abs(g.value) <= 3 * g.stderr + 1e-3


def test_furstenberg_hyperbolic_and_concentration(hyperbolic):
    g = furstenberg_integral_probe(hyperbolic, -1.0, 1, 100_000, 0, stride=100)
    assert g.value == pytest.approx(1.0, abs=1e-3)
    assert g.concentration(0.1) > 0.9


def test_furstenberg_agrees_with_wedge(bernoulli2):
    f = furstenberg_integral_probe(bernoulli2, 0.5, 2, 40_000, 7)
    w = wedge_lyapunov_sum(bernoulli2, 0.5, 2, 40_000, 8)
    assert abs(f.value - w.value) <= 3 * np.hypot(f.stderr, w.stderr)


def test_projective_distance_properties():
    u = np.array([1.0, 0.0])
    assert projective_distance(u, -u)[0] == pytest.approx(0.0)
    assert projective_distance(u, np.array([0.0, 2.0]))[0] == pytest.approx(1.0)
    assert projective_distance(u, np.array([1.0, 1.0]))[0] == pytest.approx(np.sqrt(0.5))


def test_large_deviation_deterministic_growth(hyperbolic):
    r = large_deviation_probe(hyperbolic, -1.0, 1, 200, 0.5, 100, 0, gamma_sum=1.0)
    assert r.estimate == 1.0
    assert "few-trials" not in r.flags


def test_large_deviation_flags_few_trials(hyperbolic):
    r = large_deviation_probe(hyperbolic, -1.0, 1, 50, 0.0, 20, 0, gamma_sum=1.0)
    assert "few-trials" in r.flags
    assert 0.0 <= r.estimate <= 1.0


def test_negative_moment_deterministic_closed_form(hyperbolic):
    # U_n e_1 = (cosh(n ell), sinh(n ell)), whose squared norm is cosh(2 n ell)
    n, ell = 40, hyperbolic.cell_length
    m = negative_moment_probe(hyperbolic, -1.0, 1, 1.0, n, 10, 0)
    assert m.log_mean == pytest.approx(-0.5 * np.log(np.cosh(2 * n * ell)), rel=1e-12)


def test_negative_moment_small_delta_tends_to_one(bernoulli2):
    m = negative_moment_probe(bernoulli2, 0.5, 1, 1e-8, 50, 100, 0)
    assert m.estimate == pytest.approx(1.0, abs=1e-5)


def test_negative_moment_decays_with_n(bernoulli2):
    m = negative_moment_probe(bernoulli2, 0.5, 1, 0.5, 200, 200, 3)
    assert m.slope < 0
    assert m.rate > 0


def test_negative_moment_rejects_nonpositive_delta(bernoulli2):
    with pytest.raises(ValueError):
        negative_moment_probe(bernoulli2, 0.5, 1, 0.0, 10, 10, 0)


def test_holder_diagnostic_slope_positive(bernoulli2):
    slope, _, _ = lyapunov_holder_diagnostic(bernoulli2, 0.5, [0.02, 0.05, 0.1, 0.2], 40_000, 1)
    assert slope > 0
