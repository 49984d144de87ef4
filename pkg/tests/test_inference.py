import math

import numpy as np
import pytest

from mcbn import metrics
from mcbn.errors import ContractError, DomainError, EdgeSolutionWarning
from mcbn.inference import (InferenceConfig, cu_predict, draw_batch, fit_constant_uncertainty, mcbn_predict,
                            mcbn_samples, mcdo_predict, predictive_moments)
from mcbn.mathcore import minimize_scalar, rng_stream
from mcbn.network import Dense, Dropout, Network, build_network, compute_population_stats, predict


@pytest.fixture
def trained_like():
    net = build_network(3, (10, 10), rng=rng_stream(0))
    rng = rng_stream(1)
    for l in net.bn_layers:
        l.gamma[:] = rng.uniform(0.5, 2, l.n_units)
        l.beta[:] = rng.normal(0, 0.5, l.n_units)
    X = rng_stream(2).normal(size=(40, 3))
    compute_population_stats(net, X)
    return net, X


def test_moments_formula():
    pd = predictive_moments([[0.0, 2.0]], 1.0)
    assert pd.mean[0] == 1.0 and pd.variance[0] == 2.0


def test_single_pass_variance_is_inverse_tau(trained_like):
    net, X = trained_like
    Q = rng_stream(3).normal(size=(7, 3))
    pd = mcbn_predict(net, Q, X, InferenceConfig(passes=1, batch_size=8), tau=3.7)
    assert np.all(pd.variance == 1 / 3.7)


def test_full_batch_matches_deterministic(trained_like):
    net, X = trained_like
    Q = rng_stream(3).normal(size=(7, 3))
    pd = mcbn_predict(net, Q, X, InferenceConfig(passes=20, batch_size=40), tau=2.0)
    assert np.all(pd.variance == 0.5)
    np.testing.assert_array_equal(pd.mean, predict(net, Q))
    np.testing.assert_array_equal(pd.samples, np.repeat(predict(net, Q)[:, None], 20, axis=1))


def test_predictions_independent_of_other_queries(trained_like):
    net, X = trained_like
    Q = rng_stream(3).normal(size=(7, 3))
    a = mcbn_samples(net, Q, X, 15, 8, rng_stream(9))
    b = mcbn_samples(net, Q[2:3], X, 15, 8, rng_stream(9))
    # same batches; only BLAS blocking over a different row count can differ
    np.testing.assert_allclose(a[2], b[0], rtol=1e-13)


def test_mcbn_spread_positive_for_small_batches(trained_like):
    net, X = trained_like
    pd = mcbn_predict(net, X[:5], X, InferenceConfig(passes=50, batch_size=4), tau=1.0)
    assert np.all(pd.spread > 0)


def test_gaussian_source_runs(trained_like):
    net, X = trained_like
    s = mcbn_samples(net, X[:3], X, 30, 8, rng_stream(4), source="gaussian")
    assert s.shape == (3, 30) and np.all(np.isfinite(s))
    with pytest.raises(DomainError):
        mcbn_samples(net, X[:3], X, 3, 8, rng_stream(4), source="bogus")


def test_batch_size_checks(trained_like):
    net, X = trained_like
    with pytest.raises(DomainError):
        mcbn_samples(net, X[:1], X, 3, 41, rng_stream(0))
    with pytest.raises(DomainError):
        InferenceConfig(passes=0)


def test_draw_batch_sorted_without_replacement():
    b = draw_batch(50, 20, rng_stream(0))
    assert np.all(np.diff(b) > 0) and b.size == 20


def test_mcdo_rate_zero_and_single_pass():
    net = Network([Dropout(0.0), Dense([[1.5, -0.5]], [0.2])])
    X = rng_stream(0).normal(size=(4, 2))
    pd = mcdo_predict(net, X, InferenceConfig(passes=10), tau=4.0)
    assert np.all(pd.variance == 0.25)
    net = build_network(2, (6,), norm="none", dropout=0.3, rng=rng_stream(1))
    pd = mcdo_predict(net, X, InferenceConfig(passes=1), tau=4.0)
    assert np.all(pd.variance == 0.25)
    with pytest.raises(ContractError):
        mcdo_predict(build_network(2, (4,), rng=rng_stream(0)), X, InferenceConfig(passes=2), tau=1.0)


def test_mcdo_bernoulli_expectation():
    w = 1.7
    net = Network([Dropout(0.5), Dense([[w]], [0.0])])
    pd = mcdo_predict(net, np.ones((1, 1)), InferenceConfig(passes=20000), tau=1.0, rng=rng_stream(2))
    vals = np.unique(pd.samples)
    np.testing.assert_allclose(vals, [0.0, 2 * w])
    # binomial standard error of the mean is w / sqrt(T)
    assert abs(pd.mean[0] - w) < 4 * w / math.sqrt(20000)


def test_constant_uncertainty_fit():
    with pytest.warns(EdgeSolutionWarning):
        v = fit_constant_uncertainty(np.ones(5), np.ones(5))
    assert v == 1e-12
    c = 1.3
    v = fit_constant_uncertainty(np.zeros(4), np.array([c, -c, c, -c]))
    lv, _ = minimize_scalar(lambda lv: metrics.crps_gaussian(0.0, 10 ** lv, c), (-4, 4), tol=1e-12)
    np.testing.assert_allclose(v, 10 ** lv, rtol=1e-6)
    v = fit_constant_uncertainty(np.zeros(3), np.array([0.0, 1.0, 2.0]))
    score = lambda v: np.mean(metrics.crps_gaussian(np.zeros(3), v, np.array([0.0, 1.0, 2.0])))
    grid = 10 ** np.linspace(-6, 4, 5001)
    assert score(v) <= min(score(g) for g in grid) + 1e-15


def test_cu_predict():
    pd = cu_predict([1.0, 2.0], 1.0, tau=5.0)
    assert np.all(pd.variance == 1.0)
    pd = cu_predict([1.0, 2.0], 0.0, tau=5.0)
    assert np.all(pd.variance == 0.0)
    with pytest.raises(DomainError):
        cu_predict([1.0], -1.0, 1.0)


def test_prediction_csv():
    pd = predictive_moments([[0.0, 2.0], [1.0, 1.0]], 1.0)
    lines = pd.to_csv(include_samples=True).splitlines()
    assert lines[0] == "query_id,mean,variance,s0,s1"
    assert lines[1] == "0,1.0,2.0,0.0,2.0"
