import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcbn import metrics
from mcbn.errors import DimensionError, DomainError
from mcbn.mathcore import Gaussian, gauss_cdf, gauss_pdf, quadrature, rng_stream

HALF_LOG_2PI = 0.918938533204672742


def crps_by_quadrature(mu, v, y):
    """Integral of (F(x) - 1{x >= y})**2 over x, split at y."""
    g = Gaussian(mu, v)
    w = 12 * g.std
    lo, hi = min(mu - w, y - 1), max(mu + w, y + 1)
    left = quadrature(lambda x: gauss_cdf(x, g) ** 2, lo, y, tol=1e-12)
    right = quadrature(lambda x: (1 - gauss_cdf(x, g)) ** 2, y, hi, tol=1e-12)
    return left + right


def test_crps_reference_value():
    # mpmath quadrature over the real line
    np.testing.assert_allclose(metrics.crps_gaussian(0.0, 1.0, 0.0), 0.233694977255109069, rtol=1e-14)
    np.testing.assert_allclose(crps_by_quadrature(0.0, 1.0, 0.0), 0.233694977255109069, atol=1e-9)


def test_crps_closed_form_matches_quadrature():
    rng = rng_stream(1)
    for _ in range(200):
        mu, v, y = rng.normal(0, 3), 10 ** rng.uniform(-2, 1.5), rng.normal(0, 4)
        assert abs(metrics.crps_gaussian(mu, v, y) - crps_by_quadrature(mu, v, y)) < 1e-6


@given(st.floats(0.01, 100), st.floats(-10, 10))
def test_crps_scale_equivariance(s, y):
    np.testing.assert_allclose(metrics.crps_gaussian(0.0, s * s, s * y), s * metrics.crps_gaussian(0.0, 1.0, y),
                               rtol=1e-10, atol=1e-13)


def test_crps_vectorized_and_domain():
    out = metrics.crps_gaussian(np.zeros(3), np.ones(3), np.array([0.0, 1.0, -1.0]))
    assert out.shape == (3,)
    np.testing.assert_allclose(out[1], out[2], rtol=1e-15)
    with pytest.raises(DomainError):
        metrics.crps_gaussian(0.0, 0.0, 1.0)


def test_pll_gaussian():
    np.testing.assert_allclose(metrics.pll_gaussian(0.0, 1.0, 0.0), -HALF_LOG_2PI, rtol=1e-15)
    assert metrics.pll_gaussian(1.0, 2.0, 1.5) == metrics.pll_gaussian(1.0, 2.0, 0.5)


def test_pll_gaussian_maximized_by_squared_residual():
    v = 10 ** np.linspace(-3, 3, 20001)
    best = v[np.argmax(metrics.pll_gaussian(0.0, v, 2.0))]
    np.testing.assert_allclose(best, 4.0, rtol=2e-3)
    assert metrics.optimal_variance_pll(0.0, 2.0) == 4.0


def test_pll_mc_reference_and_duplication():
    np.testing.assert_allclose(metrics.pll_mc([1.5], 1.5, 1.0), -HALF_LOG_2PI, rtol=1e-15)
    np.testing.assert_allclose(metrics.pll_mc([0.3, 0.3], 1.0, 2.0), metrics.pll_mc([0.3], 1.0, 2.0), rtol=1e-15)


def test_pll_mc_matches_direct_average():
    rng = rng_stream(2)
    for _ in range(200):
        t, tau = rng.integers(1, 40), 10 ** rng.uniform(-1, 2)
        f, y = rng.normal(0, 1, t), rng.normal()
        direct = math.log(np.mean(gauss_pdf(y, Gaussian(0.0, 1 / tau)) if t == 0 else
                                  [gauss_pdf(y, Gaussian(fj, 1 / tau)) for fj in f]))
        assert abs(metrics.pll_mc(f, y, tau) - direct) < 1e-9


def test_pll_mc_batched_rows():
    s = np.array([[0.0, 1.0], [2.0, 2.5]])
    y = np.array([0.5, 2.0])
    np.testing.assert_allclose(metrics.pll_mc(s, y, 3.0), [metrics.pll_mc(s[0], 0.5, 3.0),
                                                         metrics.pll_mc(s[1], 2.0, 3.0)], rtol=1e-15)


def test_optimal_variance_pll_beats_grid():
    rng = rng_stream(3)
    grid = 10 ** np.linspace(-6, 4, 200)
    for _ in range(100):
        mu, y = rng.normal(size=2)
        best = metrics.pll_gaussian(mu, metrics.optimal_variance_pll(mu, y), y)
        assert np.all(best >= metrics.pll_gaussian(mu, grid, y))


def test_optimal_variance_degenerate_flags():
    assert metrics.optimal_variance_pll(1.0, 1.0) == metrics.VARIANCE_FLOOR
    assert metrics.optimal_variance_crps(1.0, 1.0) == 1e-12
    np.testing.assert_array_equal(metrics.degenerate([1.0, 2.0], [1.0, 3.0]), [True, False])


def test_optimal_variance_crps_grid_and_equivariance():
    grid = np.linspace(-3, 3, 6001)
    vals = metrics.crps_gaussian(0.0, 10 ** grid, 1.0)
    lv = math.log10(metrics.optimal_variance_crps(0.0, 1.0))
    assert abs(lv - grid[np.argmin(vals)]) <= grid[1] - grid[0]
    rng = rng_stream(4)
    for r in rng.normal(size=20):
        assert metrics.optimal_variance_crps(0.0, 2 * r) == 4 * metrics.optimal_variance_crps(0.0, r)


def test_crps_optimal_ratio_is_inverse_log_two():
    # d/dv CRPS(N(0, v), 1) = 0 solved with mpmath: v = 1 / ln 2
    np.testing.assert_allclose(metrics.crps_optimal_ratio(), 1 / math.log(2), rtol=1e-7)


def test_rmse():
    assert metrics.rmse([1, 2], [1, 2]) == 0
    np.testing.assert_allclose(metrics.rmse([3, 4], [0, 0]), math.sqrt(12.5), rtol=1e-15)
    with pytest.raises(DimensionError):
        metrics.rmse([1], [1, 2])


def test_t_test_reference():
    # Student-t tail integral with 2 degrees of freedom (mpmath)
    t, p = metrics.one_sample_t_test([1, 2, 3])
    np.testing.assert_allclose(t, 3.46410161513775459, rtol=1e-14)
    np.testing.assert_allclose(p, 0.0370899501137242692, rtol=1e-10)
    t, p = metrics.one_sample_t_test([-1, 1, -2, 2], 0.0)
    assert t == 0 and p == 0.5
    with pytest.raises(DomainError):
        metrics.one_sample_t_test([1.0])


def test_t_test_power():
    # sd 0.01: effect of 10 standard deviations, always detected
    hits = sum(metrics.one_sample_t_test(rng_stream(s, 4).normal(0.1, 0.01, 25))[1] < 0.001 for s in range(100))
    assert hits >= 95


def test_t_test_power_matches_noncentral_t():
    # variance 0.01: exact power from the noncentral t is 0.9196
    from scipy import stats
    power = stats.nct.sf(stats.t.isf(0.001, 24), 24, 5.0)
    np.testing.assert_allclose(power, 0.91964, atol=1e-5)
    hits = sum(metrics.one_sample_t_test(rng_stream(s, 4).normal(0.1, 0.1, 25))[1] < 0.001 for s in range(400))
    assert abs(hits / 400 - power) < 3 * math.sqrt(power * (1 - power) / 400)


def _records(n=30, seed=0):
    rng = rng_stream(seed, 5)
    y, mu = rng.normal(size=n), rng.normal(size=n)
    model = metrics.score_gaussian(mu, rng.uniform(0.2, 2, n), y)
    base = metrics.score_gaussian(mu, 1.0, y)
    bound = metrics.score_bounds(mu, y)
    return model, base, bound


def test_normalized_scores_identities():
    model, base, bound = _records()
    assert metrics.normalized_scores(base, base, bound) == (0.0, 0.0)
    assert metrics.normalized_scores(bound, base, bound) == (100.0, 100.0)
    mid = metrics.ScoreRecord((base.crps + bound.crps) / 2, (base.pll + bound.pll) / 2)
    np.testing.assert_allclose(metrics.normalized_scores(mid, base, bound), (50.0, 50.0), rtol=1e-12)


def test_normalized_scores_per_observation_and_nan():
    model, base, bound = _records()
    a = metrics.normalized_scores(model, base, bound, per_observation=True)
    assert all(math.isfinite(x) for x in a)
    with pytest.warns(UserWarning):
        c, _ = metrics.normalized_scores(base, base, base)
    assert math.isnan(c)


def test_bound_beats_any_constant_variance():
    model, base, bound = _records()
    assert np.all(bound.crps <= base.crps + 1e-15)
    assert np.all(bound.pll >= base.pll)


def test_score_samples_uses_mixture_pll():
    s = np.array([[0.0, 1.0]])
    rec = metrics.score_samples(s, np.array([1.25]), np.array([0.5]), 4.0)
    np.testing.assert_allclose(rec.pll, [metrics.pll_mc(s[0], 0.5, 4.0)])
    np.testing.assert_allclose(rec.crps, [metrics.crps_gaussian(0.5, 1.25, 0.5)])


def test_report_json_and_csv_stable():
    model, base, bound = _records(5)
    y = np.arange(5.0)
    rep = metrics.build_report(model, base, bound, np.zeros(5), y)
    text = metrics.dumps_json(rep.to_dict())
    assert text == metrics.dumps_json(rep.to_dict())
    assert metrics.dumps_json({"x": float("nan")}) == '{\n  "x": null\n}\n'
    csv_text = metrics.scores_to_csv(y, np.zeros(5), model, base, bound)
    assert csv_text.splitlines()[0] == ",".join(metrics.SCORE_COLUMNS)
    assert len(csv_text.splitlines()) == 6
