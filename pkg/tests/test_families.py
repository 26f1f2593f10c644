"""Base family chains: links, variances, central moments, scores."""

import numpy as np
import pytest

from quasicopula import (
    Bernoulli,
    Beta,
    Binomial,
    DomainError,
    Exponential,
    Gamma,
    Gaussian,
    Geometric,
    NegativeBinomial,
    ParameterError,
    Poisson,
    UnsupportedFamilyError,
    family_from_name,
)

ALL_FAMILIES = [
    Gaussian(tau=1.0),
    Poisson(),
    Bernoulli(),
    NegativeBinomial(r=10.0),
    Gamma(alpha=2.0, theta=1.5),
    Exponential(theta=2.0),
    Beta(alpha=2.0, beta=3.0),
    Binomial(n_trials=10, p=0.3),
    Geometric(p=0.4),
]

ESTIMATION_FAMILIES = ALL_FAMILIES[:4]


def test_mean_from_eta_examples():
    assert Gaussian().mean_from_eta(1.3) == pytest.approx(1.3)
    assert Poisson().mean_from_eta(0.0) == pytest.approx(1.0)
    assert Bernoulli().mean_from_eta(0.0) == pytest.approx(0.5)


def test_log_link_overflow_guard():
    with pytest.raises(DomainError):
        Poisson().mean_from_eta(800.0)
    with pytest.raises(DomainError):
        Poisson().mean_from_eta(np.inf)


def test_variance_from_mean_examples():
    assert Poisson().variance_from_mean(2.0) == pytest.approx(2.0)
    assert NegativeBinomial(r=10.0).variance_from_mean(10.0) == pytest.approx(20.0)
    assert Bernoulli().variance_from_mean(0.5) == pytest.approx(0.25)
    assert Gaussian(tau=4.0).variance_from_mean(0.0) == pytest.approx(0.25)


def test_variance_domain_errors():
    with pytest.raises(DomainError):
        Bernoulli().variance_from_mean(1.5)
    with pytest.raises(DomainError):
        Poisson().variance_from_mean(-1.0)


def test_mean_derivatives_examples():
    assert Gaussian().mean_derivatives(0.7) == pytest.approx((1.0, 0.0, 0.0))
    assert Poisson().mean_derivatives(0.0) == pytest.approx((1.0, 1.0, 1.0))
    dmu, d2mu, dvar = Bernoulli().mean_derivatives(0.0)
    assert (dmu, d2mu, dvar) == pytest.approx((0.25, 0.0, 0.0))


@pytest.mark.parametrize("fam", ESTIMATION_FAMILIES, ids=lambda f: f.kind)
def test_mean_derivatives_match_finite_differences(fam):
    rng = np.random.default_rng(7)
    h = 1e-6
    h2 = 1e-4
    for eta in rng.uniform(-1.5, 1.5, size=12):
        mu_p = fam.mean_from_eta(eta + h)
        mu_m = fam.mean_from_eta(eta - h)
        dmu, d2mu, _ = fam.mean_derivatives(eta)
        assert dmu == pytest.approx((mu_p - mu_m) / (2 * h), rel=1e-6, abs=1e-9)
        fd2 = (
            fam.mean_from_eta(eta + h2)
            - 2 * fam.mean_from_eta(eta)
            + fam.mean_from_eta(eta - h2)
        ) / h2**2
        assert d2mu == pytest.approx(fd2, rel=1e-5, abs=1e-6)


def test_central_moments_gaussian():
    c3, c4 = Gaussian(tau=1.0).central_moments(0.3)
    assert c3 == pytest.approx(0.0)
    assert c4 == pytest.approx(3.0)


def test_central_moments_poisson_brute_force():
    """Truncated summation over k = 0..200 fixes c3 = lam, c4 = lam + 3 lam^2."""
    lam = 1.0
    k = np.arange(201)
    from scipy.stats import poisson as sp_poisson

    pmf = sp_poisson.pmf(k, lam)
    c3_ref = np.sum((k - lam) ** 3 * pmf)
    c4_ref = np.sum((k - lam) ** 4 * pmf)
    c3, c4 = Poisson().central_moments(lam)
    assert c3 == pytest.approx(c3_ref, rel=1e-10)
    assert c4 == pytest.approx(c4_ref, rel=1e-10)
    assert (c3, c4) == pytest.approx((1.0, 4.0))


def test_central_moments_bernoulli_enumeration():
    mu = 0.3
    c3, c4 = Bernoulli().central_moments(mu)
    # exhaustive two-point enumeration
    c3_ref = (0 - mu) ** 3 * (1 - mu) + (1 - mu) ** 3 * mu
    c4_ref = (0 - mu) ** 4 * (1 - mu) + (1 - mu) ** 4 * mu
    assert c3 == pytest.approx(c3_ref, rel=1e-12)
    assert c4 == pytest.approx(c4_ref, rel=1e-12)
    assert (c3, c4) == pytest.approx((0.084, 0.0777))


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=lambda f: f.kind)
def test_central_moments_match_truncated_sums(fam):
    """Brute-force moments of the base law agree with the closed forms.

    Discrete supports are truncated at tail mass < 1e-14 and must agree
    to 1e-10 relative; continuous quadrature carries its own error.
    """
    from quasicopula.oracles import base_distribution

    mu = fam.fixed_mean()
    if mu is None:
        mu = {"gaussian": 0.4, "poisson": 1.7, "bernoulli": 0.35, "negbin": 3.0}[fam.kind]
    dist = base_distribution(fam, mu)
    if fam.is_discrete:
        # run well past the 1e-14 quantile so the k^4 tail cannot bias c4
        k = np.arange(3 * int(dist.ppf(1 - 1e-14)) + 2)
        w = dist.pmf(k)
        rel = 1e-10
    else:
        from numpy.polynomial.legendre import leggauss

        lo, hi = dist.ppf(1e-15), dist.ppf(1 - 1e-15)
        x, gw = leggauss(400)
        k = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * gw * dist.pdf(k)
        rel = 1e-8
    c3_ref = float(np.sum((k - mu) ** 3 * w))
    c4_ref = float(np.sum((k - mu) ** 4 * w))
    var_ref = float(np.sum((k - mu) ** 2 * w))
    assert fam.variance_from_mean(mu) == pytest.approx(var_ref, rel=rel)
    c3, c4 = fam.central_moments(mu)
    assert c3 == pytest.approx(c3_ref, rel=rel, abs=1e-12)
    assert c4 == pytest.approx(c4_ref, rel=rel)


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=lambda f: f.kind)
def test_variance_matches_monte_carlo(fam):
    """Sample variance of 1e6 base draws within 4 Monte-Carlo SEs."""
    rng = np.random.default_rng(42)
    mu = fam.fixed_mean()
    if mu is None:
        mu = {"gaussian": 0.4, "poisson": 1.7, "bernoulli": 0.35, "negbin": 3.0}[fam.kind]
    draws = fam.sample_base(rng, mu, size=1_000_000).astype(float)
    var = fam.variance_from_mean(mu)
    _, c4 = fam.central_moments(mu)
    # var(s^2) ~ (c4 - var^2)/n
    se = np.sqrt((c4 - var**2) / draws.size)
    assert abs(np.var(draws) - var) < 4 * se + 1e-12


def test_loglik_examples():
    logf, score = Poisson().loglik_and_score_component(1.0, 0.0)
    assert logf == pytest.approx(-1.0)
    assert score == pytest.approx(0.0)

    logf, score = Gaussian(tau=1.0).loglik_and_score_component(0.7, 0.7)
    assert score == pytest.approx(0.0)

    # NB at y = mu: score vanishes and ln f matches a direct pmf evaluation
    fam = NegativeBinomial(r=10.0)
    logf, score = fam.loglik_and_score_component(10.0, np.log(10.0))
    assert score == pytest.approx(0.0, abs=1e-12)
    from scipy.stats import nbinom

    assert logf == pytest.approx(nbinom.logpmf(10, 10.0, 0.5), rel=1e-12)


@pytest.mark.parametrize("fam", ESTIMATION_FAMILIES, ids=lambda f: f.kind)
def test_score_matches_finite_differences(fam):
    rng = np.random.default_rng(3)
    ys = {"gaussian": 0.9, "poisson": 3.0, "bernoulli": 1.0, "negbin": 5.0}[fam.kind]
    h = 1e-6
    for eta in rng.uniform(-1.0, 1.0, size=10):
        lp, score = fam.loglik_and_score_component(ys, eta)
        lp_p, _ = fam.loglik_and_score_component(ys, eta + h)
        lp_m, _ = fam.loglik_and_score_component(ys, eta - h)
        assert score == pytest.approx((lp_p - lp_m) / (2 * h), rel=1e-6, abs=1e-8)


def test_support_violations():
    with pytest.raises(DomainError):
        Poisson().loglik_and_score_component(-1.0, 0.0)
    with pytest.raises(DomainError):
        Bernoulli().loglik_and_score_component(2.0, 0.0)
    with pytest.raises(DomainError):
        NegativeBinomial(r=2.0).loglik_and_score_component(1.5, 0.0)


def test_working_weights_examples():
    assert Poisson().working_weights(0.0) == pytest.approx((1.0, 1.0))
    assert Bernoulli().working_weights(0.0) == pytest.approx((1.0, 0.25))
    assert Gaussian(tau=4.0).working_weights(1.23) == pytest.approx((4.0, 4.0))


@pytest.mark.parametrize("fam", ESTIMATION_FAMILIES, ids=lambda f: f.kind)
def test_w2_equals_w1_times_mu_eta(fam):
    rng = np.random.default_rng(11)
    for eta in rng.uniform(-2, 2, size=20):
        w1, w2 = fam.working_weights(eta)
        dmu, _, _ = fam.mean_derivatives(eta)
        assert w2 == pytest.approx(w1 * dmu, rel=1e-12)


def test_sampling_only_families_reject_estimation_chain():
    with pytest.raises(UnsupportedFamilyError):
        Gamma(alpha=1.0, theta=1.0).mean_from_eta(0.0)
    with pytest.raises(UnsupportedFamilyError):
        Beta(alpha=2.0, beta=2.0).mean_derivatives(0.0)


def test_parameter_guards():
    with pytest.raises(ParameterError):
        Gaussian(tau=-1.0)
    with pytest.raises(ParameterError):
        NegativeBinomial(r=0.0)
    with pytest.raises(ParameterError):
        Geometric(p=1.0)


def test_family_from_name():
    assert family_from_name("poisson").kind == "poisson"
    assert family_from_name("negbin", r=5.0).r == 5.0
    assert family_from_name("GAUSSIAN", tau=2.0).tau == 2.0
    with pytest.raises(ParameterError):
        family_from_name("weibull")
