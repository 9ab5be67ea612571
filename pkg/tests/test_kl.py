import math

import numpy as np
import pytest

from hvae_pla import kl
from oracles import erfc_series, kl_quad, log_double_peak, log_standard_normal, max_abs_error

# frozen from the quadrature and series oracles in tests/oracles.py
ERFC_TANH_MAX_ABS_ERROR = 0.021265261326882667
EXACT_GRID_MAX_REL_ERROR = 0.17623643106030593

EXACT_GRID = [(m, u * m, r) for m in (2.0, 3.0, 4.0, 5.0, 6.0)
              for u in (-1.0, -0.5, 0.0, 0.5, 1.0) for r in (0.25, 0.5, 1.0)]


def one(x):
    return np.array([x], dtype=float)


def test_standard_normal_closed_form_matches_quadrature():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        mu, sigma = rng.uniform(-3, 3), rng.uniform(0.1, 3)
        closed = float(kl.kl_standard_normal(one(mu), one(sigma)))
        worst = max(worst, abs(closed - kl_quad(mu, sigma, log_standard_normal)))
    assert worst <= 1e-9


def test_standard_normal_zero_only_at_prior():
    assert kl.kl_standard_normal(np.zeros(4), np.ones(4)) == 0.0
    rng = np.random.default_rng(0)
    mu, sigma = rng.uniform(-2, 2, (4, 50)), rng.uniform(0.2, 2, (4, 50))
    assert np.all(kl.kl_standard_normal(mu, sigma) > 0)


def test_kl_reduces_over_latent_axis():
    mu = np.array([[0.5, 0.0], [1.0, -1.0]])
    sigma = np.ones((2, 2))
    assert np.allclose(kl.kl_standard_normal(mu, sigma), [0.625, 0.5])


def test_quadrature_kl_nonnegative():
    rng = np.random.default_rng(5)
    for _ in range(30):
        mu, sigma = rng.uniform(-3, 3), rng.uniform(0.1, 3)
        m, s = rng.uniform(0.1, 3), rng.uniform(0.1, 3)
        assert kl_quad(mu, sigma, log_double_peak(m, s)) >= -1e-12


@pytest.mark.parametrize("weight", [0.5, 0.2, 0.8])
def test_bound_dominates_quadrature(weight):
    rng = np.random.default_rng(int(weight * 100))
    violations = 0
    for _ in range(100):
        mu, sigma = rng.uniform(-3, 3), rng.uniform(0.1, 3)
        m, s = rng.uniform(0.1, 3), rng.uniform(0.1, 3)
        bound = float(kl.kl_double_peak_bound(one(mu), one(sigma), m, s, weight))
        # the mixture puts `weight` on -m
        exact = kl_quad(mu, sigma, log_double_peak(m, s, weight))
        violations += bound < exact - 1e-9
    assert violations == 0


def test_bound_reduces_to_single_gaussian_kl_at_zero_separation():
    # with m -> 0 both components coincide and the bound is the exact Gaussian KL
    mu, sigma, s = 0.7, 0.4, 1.3
    expected = math.log(s / sigma) + (sigma ** 2 + mu ** 2) / (2 * s ** 2) - 0.5
    assert float(kl.kl_double_peak_bound(one(mu), one(sigma), 1e-12, s)) == pytest.approx(expected)


def _exact_grid_errors():
    out = []
    for m, mu, r in EXACT_GRID:
        approx = float(kl.kl_double_peak_exact(one(mu), one(r), m, 1.0))
        ref = kl_quad(mu, r, log_double_peak(m, 1.0))
        out.append(((m, mu, r), abs(approx - ref) / ref))
    return out


def test_exact_approximation_regression_fixture():
    errors = _exact_grid_errors()
    worst = max(e for _, e in errors)
    assert worst == pytest.approx(EXACT_GRID_MAX_REL_ERROR, rel=1e-6)


def test_exact_approximation_tight_for_well_separated_peaks():
    errors = _exact_grid_errors()
    assert max(e for (m, _, _), e in errors if m >= 4) < 0.075
    assert max(e for (m, _, r), e in errors if r <= 0.5) < 0.15


def test_exact_approximation_log2_residual_at_zero_separation():
    val = float(kl.kl_double_peak_exact(one(0.3), one(0.8), 0.0, 0.8))
    gauss = math.log(0.8 / 0.8) + (0.8 ** 2 + 0.3 ** 2) / (2 * 0.8 ** 2) - 0.5
    assert val - gauss == pytest.approx(math.log(2.0))


def test_erfc_tanh_max_error_matches_fixture():
    worst = max_abs_error(lambda x: float(kl.erfc_tanh(x)), erfc_series, 0.0, 3.0)
    assert worst == pytest.approx(ERFC_TANH_MAX_ABS_ERROR, abs=1e-12)


def test_erfc_series_oracle_is_sound():
    # spot values of erfc known to many digits
    assert erfc_series(0.5) == pytest.approx(0.4795001221869535, abs=1e-13)
    assert erfc_series(2.0) == pytest.approx(0.004677734981047266, abs=1e-13)


@pytest.mark.parametrize("fn, grad, args", [
    (kl.kl_standard_normal, kl.kl_standard_normal_grad, ()),
    (kl.kl_double_peak_bound, kl.kl_double_peak_bound_grad, (1.3, 0.7, 0.3)),
    (kl.kl_double_peak_exact, kl.kl_double_peak_exact_grad, (2.0, 0.9)),
])
def test_kl_gradients_match_central_differences(fn, grad, args):
    rng = np.random.default_rng(1)
    mu = rng.uniform(-2, 2, 12)
    log_var = rng.uniform(-1.5, 1.0, 12)
    g_mu, g_lv = grad(mu, np.exp(0.5 * log_var), *args)
    h = 1e-6
    for i in range(12):
        e = np.zeros(12)
        e[i] = h
        fd_mu = (fn(mu + e, np.exp(0.5 * log_var), *args) - fn(mu - e, np.exp(0.5 * log_var), *args)) / (2 * h)
        fd_lv = (fn(mu, np.exp(0.5 * (log_var + e)), *args) - fn(mu, np.exp(0.5 * (log_var - e)), *args)) / (2 * h)
        assert g_mu[i] == pytest.approx(fd_mu, rel=1e-6, abs=1e-8)
        assert g_lv[i] == pytest.approx(fd_lv, rel=1e-6, abs=1e-8)


def test_domain_errors():
    with pytest.raises(kl.DomainError):
        kl.kl_standard_normal(one(0.0), one(0.0))
    with pytest.raises(kl.DomainError):
        kl.kl_double_peak_bound(one(0.0), one(1.0), 1.0, -1.0)
    with pytest.raises(kl.DomainError):
        kl.kl_double_peak_bound(one(0.0), one(1.0), 1.0, 1.0, weight=1.0)
    with pytest.raises(kl.DomainError):
        kl.kl_double_peak_exact(one(0.0), one(-1.0), 1.0, 1.0)
