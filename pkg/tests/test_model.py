"""Joint density, exact moments and marginal/conditional laws."""

import math

import numpy as np
import pytest

from quasicopula import (
    AR1Covariance,
    Bernoulli,
    Beta,
    Binomial,
    Exponential,
    Gamma,
    Gaussian,
    Geometric,
    NegativeBinomial,
    Poisson,
    QuasiCopulaModel,
    SamplingUnit,
    UnitTemplate,
    VarianceComponents,
    bivariate_design,
    conditional_density,
    conditional_moments,
    exact_moments,
    logdensity_unit,
    loglikelihood,
    marginal_density,
    standardized_residuals,
)
from quasicopula import oracles


def intercept_unit(family, y, d=None):
    d = d or len(np.atleast_1d(y))
    return SamplingUnit(X=np.ones((d, 1)), families=(family,) * d, y=np.atleast_1d(y))


def intercept_template(family, d):
    return UnitTemplate(X=np.ones((d, 1)), families=(family,) * d)


def vc_model(theta, beta=0.0, **kw):
    return QuasiCopulaModel(
        beta=np.atleast_1d(beta),
        covariance=VarianceComponents.random_intercept(theta),
        **kw,
    )


def test_standardized_residuals_examples():
    unit = intercept_unit(Gaussian(tau=1.0), [1.0, -1.0])
    model = vc_model(0.1)
    np.testing.assert_allclose(standardized_residuals(model, unit), [1.0, -1.0])

    unit = intercept_unit(Poisson(), [4.0], d=1)
    model = vc_model(0.1)
    np.testing.assert_allclose(standardized_residuals(model, unit), [3.0])

    unit = intercept_unit(Poisson(), [1.0, 1.0])
    np.testing.assert_allclose(standardized_residuals(vc_model(0.2), unit), [0.0, 0.0])


def test_logdensity_independence_reduction():
    unit = intercept_unit(Poisson(), [2.0, 0.0])
    model = vc_model(0.0)
    expected = sum(
        float(Poisson().logpdf(y, 1.0)) for y in unit.y
    )
    assert logdensity_unit(model, unit) == pytest.approx(expected, rel=1e-12)


def test_logdensity_d1_gaussian():
    fam = Gaussian(tau=1.0)
    unit = SamplingUnit(X=np.zeros((1, 1)), families=(fam,), y=np.array([0.0]))
    model = QuasiCopulaModel(
        beta=np.zeros(1), covariance=VarianceComponents(theta=[2.0], builders=(np.eye,))
    )
    expected = math.log(1.0 / math.sqrt(2 * math.pi)) - math.log(2.0)
    assert logdensity_unit(model, unit) == pytest.approx(expected, rel=1e-12)


def test_logdensity_matches_direct_formula():
    """Scalar-arithmetic oracle built on scipy base densities agrees to 1e-12."""
    unit = intercept_unit(Poisson(), [0.0, 0.0])
    model = vc_model(0.1)
    ours = logdensity_unit(model, unit)
    direct = oracles.logdensity_direct(model, unit.template, unit.y)
    assert ours == pytest.approx(direct, rel=1e-12)

    rng = np.random.default_rng(4)
    fams = [Gaussian(tau=2.0), Poisson(), Bernoulli(), NegativeBinomial(r=8.0)]
    ys = {"gaussian": 0.73, "poisson": 3.0, "bernoulli": 1.0, "negbin": 2.0}
    for fam in fams:
        for _ in range(5):
            theta = rng.uniform(0.01, 0.4)
            unit = intercept_unit(fam, [ys[fam.kind]] * 2)
            model = vc_model(theta, beta=rng.uniform(-0.3, 0.3))
            assert logdensity_unit(model, unit) == pytest.approx(
                oracles.logdensity_direct(model, unit.template, unit.y), rel=1e-12
            )


def test_loglikelihood_sums_and_permutes():
    rng = np.random.default_rng(9)
    units = [intercept_unit(Poisson(), rng.poisson(1.0, size=3)) for _ in range(12)]
    model = vc_model(0.15, beta=0.1)
    total = loglikelihood(model, units)
    direct = sum(logdensity_unit(model, u) for u in units)
    assert total == pytest.approx(direct, rel=1e-10)
    shuffled = [units[i] for i in rng.permutation(len(units))]
    assert loglikelihood(model, shuffled) == pytest.approx(total, rel=1e-10)
    single = [units[0]]
    assert loglikelihood(model, single) == pytest.approx(
        logdensity_unit(model, units[0]), rel=1e-12
    )


def test_gaussian_loglik_reduces_to_least_squares():
    rng = np.random.default_rng(2)
    units = []
    beta = np.array([0.4, -0.2])
    for _ in range(6):
        X = np.column_stack([np.ones(3), rng.normal(size=3)])
        y = X @ beta + rng.normal(size=3)
        units.append(SamplingUnit(X=X, families=(Gaussian(tau=1.0),) * 3, y=y))
    model = QuasiCopulaModel(
        beta=beta, covariance=VarianceComponents.random_intercept(0.0), tau=1.0
    )
    rss = sum(float(np.sum((u.y - u.X @ beta) ** 2)) for u in units)
    n = sum(u.dim for u in units)
    expected = -0.5 * n * math.log(2 * math.pi) - 0.5 * rss
    assert loglikelihood(model, units) == pytest.approx(expected, rel=1e-12)


# ----------------------------------------------------------------------
# normalization and moments against numeric oracles
# ----------------------------------------------------------------------

ORACLE_FAMILIES = [
    Gaussian(tau=1.0),
    Poisson(),
    Bernoulli(),
    NegativeBinomial(r=10.0),
    Gamma(alpha=2.0, theta=1.5),
    Exponential(theta=1.0),
    Beta(alpha=2.5, beta=3.0),
    Binomial(n_trials=8, p=0.4),
    Geometric(p=0.5),
]


@pytest.mark.parametrize("fam", ORACLE_FAMILIES, ids=lambda f: f.kind)
def test_normalization_d2(fam):
    """Joint density integrates/sums to one for random admissible Gamma."""
    rng = np.random.default_rng(hash(fam.kind) % 2**32)
    beta = {"poisson": 0.2, "negbin": 0.5, "bernoulli": -0.4}.get(fam.kind, 0.1)
    for _ in range(5):
        a = rng.uniform(-0.5, 0.5, size=2)
        gamma_half = np.outer(a, a) + np.diag(rng.uniform(0.0, 0.3, size=2))
        spec = VarianceComponents(theta=[1.0], builders=(lambda d, g=gamma_half: g,))
        model = QuasiCopulaModel(beta=np.array([beta]), covariance=spec)
        template = intercept_template(fam, 2)
        assert oracles.numeric_normalization(model, template) == pytest.approx(
            1.0, abs=1e-6
        )


def test_exact_moments_reduce_at_zero_gamma():
    template = intercept_template(Poisson(), 3)
    model = vc_model(0.0, beta=0.3)
    mean, cov = exact_moments(model, template)
    mu = math.exp(0.3)
    np.testing.assert_allclose(mean, mu)
    np.testing.assert_allclose(cov, np.diag([mu] * 3))


def test_exact_moments_gaussian_d1():
    fam = Gaussian(tau=1.0)
    template = UnitTemplate(X=np.zeros((1, 1)), families=(fam,))
    model = QuasiCopulaModel(
        beta=np.zeros(1), covariance=VarianceComponents(theta=[0.2], builders=(np.eye,))
    )
    mean, cov = exact_moments(model, template)
    assert mean[0] == pytest.approx(0.0)
    assert cov[0, 0] == pytest.approx((1 / 1.1) * 1.3, rel=1e-12)
    # quadrature oracle
    m_ref, c_ref = oracles.numeric_moments(model, template)
    assert cov[0, 0] == pytest.approx(c_ref[0, 0], rel=1e-8)


def test_exact_moments_poisson_example():
    template = intercept_template(Poisson(), 2)
    model = QuasiCopulaModel(
        beta=np.zeros(1), covariance=VarianceComponents(theta=[0.1], builders=(np.eye,))
    )
    mean, cov = exact_moments(model, template)
    assert mean[0] == pytest.approx(1.0 + (1 / 1.1) * 0.05, rel=1e-12)
    m_ref, c_ref = oracles.numeric_moments(model, template)
    np.testing.assert_allclose(mean, m_ref, rtol=1e-8)
    np.testing.assert_allclose(cov, c_ref, rtol=1e-6)


@pytest.mark.parametrize("fam", ORACLE_FAMILIES, ids=lambda f: f.kind)
def test_exact_moments_match_numeric(fam):
    rng = np.random.default_rng(abs(hash(fam.kind + "m")) % 2**32)
    a = rng.uniform(-0.4, 0.4, size=2)
    gamma = np.outer(a, a) + np.diag(rng.uniform(0.05, 0.25, size=2))
    spec = VarianceComponents(theta=[1.0], builders=(lambda d, g=gamma: g,))
    model = QuasiCopulaModel(beta=np.array([0.15]), covariance=spec)
    template = intercept_template(fam, 2)
    mean, cov = exact_moments(model, template)
    m_ref, c_ref = oracles.numeric_moments(model, template)
    np.testing.assert_allclose(mean, m_ref, rtol=1e-6)
    np.testing.assert_allclose(cov, c_ref, rtol=1e-6, atol=1e-9)


def test_moment_shift_is_first_order_in_gamma():
    """Richardson extrapolated slope of E(Y)-mu equals sigma*skew*gamma_kk/2."""
    fam = Poisson()
    template = intercept_template(fam, 2)
    gamma0 = np.array([[0.3, 0.1], [0.1, 0.2]])

    def shift(t):
        spec = VarianceComponents(theta=[t], builders=(lambda d, g=gamma0: g,))
        model = QuasiCopulaModel(beta=np.array([0.0]), covariance=spec)
        mean, _ = exact_moments(model, template)
        return mean[0] - 1.0

    t = 1e-3
    s1 = shift(t) / t
    s2 = shift(t / 2) / (t / 2)
    slope = 2 * s2 - s1
    mu = 1.0
    sigma = math.sqrt(mu)
    skew = fam.central_moments(mu)[0] / sigma**3
    expected = sigma * skew * gamma0[0, 0] / 2.0
    assert slope == pytest.approx(expected, rel=1e-6)


# ----------------------------------------------------------------------
# marginal and conditional laws
# ----------------------------------------------------------------------


def test_marginal_full_subset_equals_joint():
    unit = intercept_unit(Poisson(), [2.0, 1.0])
    model = vc_model(0.2, beta=0.1)
    joint = math.exp(logdensity_unit(model, unit))
    marg = marginal_density(model, unit.template, [0, 1], unit.y)
    assert marg == pytest.approx(joint, rel=1e-12)


def test_marginal_zero_gamma_is_base_product():
    unit = intercept_unit(Poisson(), [2.0])
    model = vc_model(0.0, beta=0.1)
    marg = marginal_density(model, intercept_template(Poisson(), 2), [0], [2.0])
    assert marg == pytest.approx(math.exp(float(Poisson().logpdf(2.0, math.exp(0.1)))))


def test_marginal_integrates_to_one():
    fam = Gaussian(tau=1.0)
    template = intercept_template(fam, 2)
    model = QuasiCopulaModel(
        beta=np.array([0.0]), covariance=VarianceComponents(theta=[0.1], builders=(np.eye,))
    )
    from numpy.polynomial.legendre import leggauss

    x, w = leggauss(200)
    lo, hi = -10.0, 10.0
    nodes = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w
    total = sum(
        wt * marginal_density(model, template, [0], [v]) for v, wt in zip(nodes, weights)
    )
    assert total == pytest.approx(1.0, abs=1e-8)


def test_marginal_matches_numeric_integration():
    fam = Poisson()
    template = intercept_template(fam, 2)
    model = QuasiCopulaModel(
        beta=np.array([0.2]),
        covariance=VarianceComponents(theta=[0.15], builders=(lambda d: np.ones((d, d)),)),
    )
    for y0 in (0.0, 1.0, 3.0):
        ours = marginal_density(model, template, [0], [y0])
        ref = oracles.numeric_marginal(model, template, [0], [y0])
        assert ours == pytest.approx(ref, rel=1e-6)


def test_conditional_normalizer_example():
    # r_T = 0 and tr(Gamma_S) = 0.1 gives d_S = 1/1.05
    fam = Poisson()
    template = intercept_template(fam, 2)
    gamma = np.diag([0.1, 0.3])
    spec = VarianceComponents(theta=[1.0], builders=(lambda d, g=gamma: g,))
    model = QuasiCopulaModel(beta=np.array([0.0]), covariance=spec)
    # y_T at the mean makes r_T = 0; conditional of S={0} given T={1}
    dens = conditional_density(model, template, [0], [1.0], [1.0])
    # compare against d_S * f(y) * (1 + quad)
    resid = np.array([0.0, 0.0])
    base = math.exp(float(fam.logpdf(1.0, 1.0)))
    assert dens == pytest.approx(base * (1.0 / 1.05) * (1.0 + 0.0), rel=1e-12)


def test_conditional_zero_gamma_is_base_product():
    fam = Poisson()
    template = intercept_template(fam, 2)
    model = vc_model(0.0)
    dens = conditional_density(model, template, [1], [2.0], [5.0])
    assert dens == pytest.approx(math.exp(float(fam.logpdf(2.0, 1.0))), rel=1e-12)


def test_conditional_density_sums_to_one():
    fam = Poisson()
    template = intercept_template(fam, 2)
    model = vc_model(0.1)
    total = sum(
        conditional_density(model, template, [1], [k], [2.0]) for k in range(80)
    )
    assert total == pytest.approx(1.0, abs=1e-10)


def test_conditional_moments_examples():
    fam = Gaussian(tau=1.0)
    template = UnitTemplate(X=np.zeros((2, 1)), families=(fam,) * 2)
    model = QuasiCopulaModel(
        beta=np.zeros(1),
        covariance=VarianceComponents(theta=[0.2], builders=(lambda d: np.ones((d, d)),)),
    )
    # r_T = 0 and c3 = 0: conditional mean is mu_k
    cm = conditional_moments(model, template, [0], [0.0])
    assert cm.mean[0] == pytest.approx(0.0, abs=1e-14)
    assert cm.variance_is_approximate

    # zero Gamma: (mu, sigma^2, 0)
    model0 = vc_model(0.0)
    template_p = UnitTemplate(X=np.ones((2, 1)), families=(Poisson(),) * 2)
    cm0 = conditional_moments(model0, template_p, [0], [3.0])
    assert cm0.mean[0] == pytest.approx(1.0)
    assert cm0.variance[0] == pytest.approx(1.0)


def test_conditional_mean_matches_numeric():
    """Exact conditional mean against brute-force conditional summation."""
    fam = Poisson()
    template = intercept_template(fam, 2)
    gamma = np.array([[0.05, 0.05], [0.05, 0.05]])
    spec = VarianceComponents(theta=[1.0], builders=(lambda d, g=gamma: g,))
    model = QuasiCopulaModel(beta=np.array([0.0]), covariance=spec)
    cm = conditional_moments(model, template, [1], [3.0])
    ref_mean, ref_var = oracles.numeric_conditional_moments(model, template, 1, [3.0])
    assert cm.mean[0] == pytest.approx(ref_mean, rel=1e-10)
    # variance is quoted to O(||Gamma||^2): bounded by C * ||Gamma||^2 with C <= 5
    assert abs(cm.variance[0] - ref_var) <= 5.0 * np.linalg.norm(gamma, 2) ** 2


def test_conditional_mean_exactness_across_gammas():
    """The d_S-form conditional mean is exact, not merely first order."""
    fam = Gaussian(tau=0.25)  # sigma = 2 exercises the sigma_k scaling
    template = UnitTemplate(X=np.zeros((2, 1)), families=(fam,) * 2)
    gamma = np.array([[0.3, 0.25], [0.25, 0.4]])
    spec = VarianceComponents(theta=[1.0], builders=(lambda d, g=gamma: g,))
    model = QuasiCopulaModel(beta=np.zeros(1), covariance=spec)
    for y_t in (-2.0, 0.5, 3.0):
        cm = conditional_moments(model, template, [1], [y_t])
        ref_mean, _ = oracles.numeric_conditional_moments(model, template, 1, [y_t])
        assert cm.mean[0] == pytest.approx(ref_mean, rel=1e-9, abs=1e-12)


def test_bivariate_design_layout():
    X = bivariate_design([1.0, 2.0])
    np.testing.assert_allclose(X, [[1, 2, 0, 0], [0, 0, 1, 2]])
