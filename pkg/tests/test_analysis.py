import math

import numpy as np
import pytest

from mcbn import analysis
from mcbn.errors import DimensionError, DomainError
from mcbn.mathcore import Gaussian, rng_stream
from mcbn.network import build_network


@pytest.fixture(scope="module")
def gaussian_net():
    net = build_network(8, (50, 50), rng=rng_stream(0, 13))
    X = rng_stream(0, 12).normal(size=(2000, 8))
    return net, X


@pytest.fixture(scope="module")
def draws(gaussian_net):
    net, X = gaussian_net
    return analysis.collect_bn_stat_samples(net, X, 32, 1000, rng_stream(0, 14))


def test_predicted_mean_dist():
    m, v = analysis.predicted_mean_dist(0.0, 1.0, 32)
    assert m == 0 and v == 0.03125
    _, v2 = analysis.predicted_mean_dist(0.0, 1.0, 64)
    assert v2 == v / 2
    with pytest.warns(UserWarning):
        _, v0 = analysis.predicted_mean_dist(1.0, 0.0, 32)
    assert v0 == 0


def test_predicted_std_dist():
    s = 1.7
    _, v = analysis.predicted_std_dist(s, 3 * s ** 4, 40)
    np.testing.assert_allclose(v, s * s / 80, rtol=1e-14)
    m, v = analysis.predicted_std_dist(1.0, 3.0, 50)
    assert m == 1.0 and v == 0.01
    assert analysis.predicted_std_dist(1.0, 3.0, 10 ** 9)[1] < 1e-9
    with pytest.raises(DomainError):
        analysis.predicted_std_dist(0.0, 1.0, 32)
    with pytest.raises(DomainError):
        analysis.predicted_std_dist(1.0, 0.5, 32)


def test_moment_summaries_exact_pass(gaussian_net):
    net, X = gaussian_net
    s = analysis.unit_moment_summaries(net, X)[0]
    d1 = net.layers[0]
    H = X @ d1.W.T + d1.b
    np.testing.assert_allclose(s.mean, H.mean(0), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(s.std, H.std(0), rtol=1e-12)
    np.testing.assert_allclose(s.fourth, ((H - H.mean(0)) ** 4).mean(0), rtol=1e-12)


def test_full_batch_draws_identical(gaussian_net):
    net, X = gaussian_net
    mus, sigmas = analysis.collect_bn_stat_samples(net, X[:64], 64, 100, rng_stream(1))
    assert np.all(mus[0] == mus[0][0]) and np.all(sigmas[1] == sigmas[1][0])


def test_collect_requires_draws(gaussian_net):
    net, X = gaussian_net
    with pytest.raises(DomainError):
        analysis.collect_bn_stat_samples(net, X, 32, 10, rng_stream(1))


def test_batch_mean_variance_matches_clt(gaussian_net, draws):
    net, X = gaussian_net
    s = analysis.unit_moment_summaries(net, X)[0]
    _, pred = analysis.predicted_mean_dist(s.mean, s.std, 32)
    emp = draws[0][0].var(axis=0)
    assert np.all(np.abs(emp - pred) / pred < 0.15)


@pytest.mark.xfail(strict=True, reason="the CLT center ignores the O(1/M) bias of the batch std")
def test_batch_std_center_within_three_standard_errors(gaussian_net, draws):
    net, X = gaussian_net
    s = analysis.unit_moment_summaries(net, X)[0]
    sig = draws[1][0]
    se = sig.std(axis=0) / math.sqrt(sig.shape[0])
    z = (sig.mean(axis=0) - s.std) / se
    assert np.mean(np.abs(z) < 3) >= 0.9


def test_batch_std_center_second_order(gaussian_net, draws):
    # E[s] ~ sigma sqrt(1 - 1/M) - (E4 - sigma^4) / (8 sigma^3 M), sampling without replacement
    net, X = gaussian_net
    s = analysis.unit_moment_summaries(net, X)[0]
    M, N = 32, X.shape[0]
    fpc = (N - M) / (N - 1)
    center = s.std * math.sqrt(1 - fpc / M) - fpc * (s.fourth - s.std ** 4) / (8 * s.std ** 3 * M)
    sig = draws[1][0]
    z = (sig.mean(axis=0) - center) / (sig.std(axis=0) / math.sqrt(sig.shape[0]))
    assert np.mean(np.abs(z) < 3) >= 0.95


def test_normality_table_mean_and_shape(gaussian_net):
    net, X = gaussian_net
    rows = analysis.normality_table(net, X, 32, 1000, rng_stream(0, 14), layers=[0])
    assert len(rows) == 50
    assert np.mean([r.p_mu > 0.01 for r in rows]) >= 0.9
    assert np.mean([r.p_sigma_shape > 0.01 for r in rows]) >= 0.8


def test_kl_identity_and_reference():
    g = Gaussian(0.3, 2.0)
    assert abs(analysis.kl_gaussian(g, g)) <= 1e-12
    np.testing.assert_allclose(analysis.kl_gaussian(Gaussian(1, 1), Gaussian(0, 1)), 0.5, rtol=1e-15)


def test_kl_closed_form_matches_quadrature():
    rng = rng_stream(3)
    for _ in range(100):
        q = Gaussian(rng.normal(0, 2), 10 ** rng.uniform(-1.5, 1.5))
        p = Gaussian(rng.normal(0, 2), 10 ** rng.uniform(-1.5, 1.5))
        kl = analysis.kl_gaussian(q, p)
        assert kl >= 0
        assert abs(kl - analysis.kl_quadrature(q, p)) < 1e-6


def test_kl_factorized():
    assert analysis.kl_factorized([], []) == 0
    q, p = Gaussian(1, 2), Gaussian(0, 1)
    np.testing.assert_allclose(analysis.kl_factorized([q, q], [p, p]), 2 * analysis.kl_gaussian(q, p), rtol=1e-15)
    rng = rng_stream(4)
    qs = [Gaussian(rng.normal(), rng.uniform(0.2, 3)) for _ in range(6)]
    ps = [Gaussian(rng.normal(), rng.uniform(0.2, 3)) for _ in range(6)]
    ref = math.fsum(analysis.kl_quadrature(a, b) for a, b in zip(qs, ps))
    assert abs(analysis.kl_factorized(qs, ps) - ref) < 1e-5
    with pytest.raises(DimensionError):
        analysis.kl_factorized(qs, ps[:2])


def test_prior_params():
    p = analysis.prior_params(1000, 1.0, 0.01)
    np.testing.assert_allclose(p.sigma_sigma_p, 0.05, rtol=1e-15)
    assert analysis.prior_params(2000, 1.0, 0.01).sigma_sigma_p == p.sigma_sigma_p / 2
    with pytest.warns(UserWarning):
        p0 = analysis.prior_params(1000, 1.0, 0.0)
    assert p0.improper and math.isinf(p0.sigma_sigma_p)
    with pytest.raises(DomainError):
        analysis.prior_params(0, 1.0, 0.1)
