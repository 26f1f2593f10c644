"""GLM base distributions and canonical links.

Each family exposes the mean/variance chain used by the estimator
(``mean_from_eta``, ``variance_from_mean``, ``mean_derivatives``,
``working_weights``), exact third/fourth central moments used by the
moment formulas, and per-observation log densities with their eta-scores.

Estimation supports the Gaussian, Poisson, Bernoulli and negative
binomial families. The remaining families (gamma, exponential, beta,
binomial, geometric) carry fixed parameters and are available for
sampling and density evaluation only.

All numeric methods accept scalars or numpy arrays and are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .errors import DomainError, ParameterError, UnsupportedFamilyError

# eta beyond this overflows exp() in double precision
_ETA_MAX = math.log(np.finfo(float).max)

ESTIMATION_KINDS = ("gaussian", "poisson", "bernoulli", "negbin")
SAMPLING_ONLY_KINDS = ("gamma", "exponential", "beta", "binomial", "geometric")


def _check_finite(eta):
    if not np.all(np.isfinite(eta)):
        raise DomainError("linear predictor eta must be finite")


def _guard_log_link(eta):
    _check_finite(eta)
    if np.any(np.asarray(eta) > _ETA_MAX):
        raise DomainError("log link overflow: eta exceeds ln(max double)")


class BaseFamily:
    """Per-coordinate outcome distribution with its canonical link."""

    kind: str = "base"
    link: str = "identity"
    is_discrete: bool = False
    supports_estimation: bool = False

    # Families with fixed parameters report their mean here; GLM-linked
    # families return None and derive the mean from eta.
    def fixed_mean(self):
        return None

    def mean_from_eta(self, eta):
        """Inverse link mu = g^{-1}(eta)."""
        raise UnsupportedFamilyError(f"{self.kind} is sampling-only")

    def eta_from_mean(self, mu):
        """Link eta = g(mu)."""
        raise UnsupportedFamilyError(f"{self.kind} is sampling-only")

    def variance_from_mean(self, mu):
        """Variance of the base law at mean mu."""
        raise NotImplementedError

    def mean_derivatives(self, eta):
        """Return (dmu/deta, d2mu/deta2, dvar/dmu) at eta."""
        raise UnsupportedFamilyError(f"{self.kind} is sampling-only")

    def central_moments(self, mu):
        """Exact third and fourth central moments (c3, c4) at mean mu."""
        raise NotImplementedError

    def working_weights(self, eta):
        """Diagonal weights (w1, w2) = (mu'/var, mu'^2/var)."""
        mu_eta, _, _ = self.mean_derivatives(eta)
        var = self.variance_from_mean(self.mean_from_eta(eta))
        return mu_eta / var, mu_eta**2 / var

    def loglik_and_score_component(self, y, eta):
        """Return (ln f(y|eta), d ln f/d eta)."""
        self.check_support(y)
        mu = self.mean_from_eta(eta)
        mu_eta, _, _ = self.mean_derivatives(eta)
        var = self.variance_from_mean(mu)
        return self.logpdf(y, mu), (y - mu) * mu_eta / var

    def logpdf(self, y, mu):
        """Log density/mass of the base law at mean mu."""
        raise NotImplementedError

    def check_support(self, y):
        """Raise DomainError when y lies outside the support."""
        if not np.all(np.isfinite(y)):
            raise DomainError(f"{self.kind}: response must be finite")

    def in_support(self, y) -> bool:
        try:
            self.check_support(y)
        except DomainError:
            return False
        return True

    def sample_base(self, rng, mu, size=None):
        """Draw from the base law at mean mu (params fixed otherwise)."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


def _check_counts(kind, y):
    y = np.asarray(y)
    if not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y != np.floor(y)):
        raise DomainError(f"{kind}: response must be a nonnegative integer")


@dataclass(frozen=True)
class Gaussian(BaseFamily):
    """Gaussian base with identity link; carries precision tau = 1/sigma0^2."""

    tau: float = 1.0

    kind = "gaussian"
    link = "identity"
    supports_estimation = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterError("gaussian precision tau must be positive")

    @property
    def sigma0_sq(self):
        return 1.0 / self.tau

    def with_dispersion(self, tau):
        return replace(self, tau=float(tau))

    def mean_from_eta(self, eta):
        _check_finite(eta)
        return np.asarray(eta, dtype=float) + 0.0

    def eta_from_mean(self, mu):
        return np.asarray(mu, dtype=float) + 0.0

    def variance_from_mean(self, mu):
        return np.full_like(np.asarray(mu, dtype=float), 1.0 / self.tau) + 0.0

    def mean_derivatives(self, eta):
        _check_finite(eta)
        one = np.ones_like(np.asarray(eta, dtype=float))
        return one, 0.0 * one, 0.0 * one

    def central_moments(self, mu):
        var = self.variance_from_mean(mu)
        return 0.0 * var, 3.0 * var**2

    def logpdf(self, y, mu):
        return 0.5 * np.log(self.tau / (2.0 * np.pi)) - 0.5 * self.tau * (y - mu) ** 2

    def sample_base(self, rng, mu, size=None):
        return rng.normal(mu, self.tau**-0.5, size=size)


@dataclass(frozen=True)
class Poisson(BaseFamily):
    """Poisson base with log link."""

    kind = "poisson"
    link = "log"
    is_discrete = True
    supports_estimation = True

    def mean_from_eta(self, eta):
        _guard_log_link(eta)
        return np.exp(eta)

    def eta_from_mean(self, mu):
        if np.any(np.asarray(mu) <= 0):
            raise DomainError("poisson mean must be positive")
        return np.log(mu)

    def variance_from_mean(self, mu):
        if np.any(np.asarray(mu) <= 0):
            raise DomainError("poisson mean must be positive")
        return np.asarray(mu, dtype=float) + 0.0

    def mean_derivatives(self, eta):
        mu = self.mean_from_eta(eta)
        return mu, mu, np.ones_like(mu)

    def central_moments(self, mu):
        mu = self.variance_from_mean(mu)
        return mu, mu + 3.0 * mu**2

    def logpdf(self, y, mu):
        return y * np.log(mu) - mu - special.gammaln(np.asarray(y) + 1.0)

    def check_support(self, y):
        _check_counts(self.kind, y)

    def sample_base(self, rng, mu, size=None):
        return rng.poisson(mu, size=size)


@dataclass(frozen=True)
class Bernoulli(BaseFamily):
    """Bernoulli base with logit link."""

    kind = "bernoulli"
    link = "logit"
    is_discrete = True
    supports_estimation = True

    def mean_from_eta(self, eta):
        _check_finite(eta)
        return special.expit(eta)

    def eta_from_mean(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0) or np.any(mu >= 1):
            raise DomainError("bernoulli mean must lie in (0, 1)")
        return special.logit(mu)

    def variance_from_mean(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0) or np.any(mu >= 1):
            raise DomainError("bernoulli mean must lie in (0, 1)")
        return mu * (1.0 - mu)

    def mean_derivatives(self, eta):
        mu = self.mean_from_eta(eta)
        v = mu * (1.0 - mu)
        return v, v * (1.0 - 2.0 * mu), 1.0 - 2.0 * mu

    def central_moments(self, mu):
        v = self.variance_from_mean(mu)
        return v * (1.0 - 2.0 * np.asarray(mu)), v * (1.0 - 3.0 * v)

    def logpdf(self, y, mu):
        y = np.asarray(y, dtype=float)
        return y * np.log(mu) + (1.0 - y) * np.log1p(-np.asarray(mu, dtype=float))

    def check_support(self, y):
        y = np.asarray(y)
        if np.any((y != 0) & (y != 1)):
            raise DomainError("bernoulli: response must be 0 or 1")

    def sample_base(self, rng, mu, size=None):
        return rng.binomial(1, mu, size=size)


@dataclass(frozen=True)
class NegativeBinomial(BaseFamily):
    """Negative binomial base (failures before the r-th success), log link.

    Parameterized by a real dispersion r > 0 with mu = r(1-p)/p, so
    p = r/(r + mu) and var = mu(1 + mu/r).
    """

    r: float = 1.0

    kind = "negbin"
    link = "log"
    is_discrete = True
    supports_estimation = True

    def __post_init__(self):
        if not self.r > 0:
            raise ParameterError("negbin dispersion r must be positive")

    def with_dispersion(self, r):
        return replace(self, r=float(r))

    def mean_from_eta(self, eta):
        _guard_log_link(eta)
        return np.exp(eta)

    def eta_from_mean(self, mu):
        if np.any(np.asarray(mu) <= 0):
            raise DomainError("negbin mean must be positive")
        return np.log(mu)

    def variance_from_mean(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise DomainError("negbin mean must be positive")
        return mu * (1.0 + mu / self.r)

    def mean_derivatives(self, eta):
        mu = self.mean_from_eta(eta)
        return mu, mu, 1.0 + 2.0 * mu / self.r

    def central_moments(self, mu):
        var = self.variance_from_mean(mu)
        p = self.r / (self.r + np.asarray(mu, dtype=float))
        q = 1.0 - p
        c3 = (2.0 - p) * var / p
        kurt = 3.0 + 6.0 / self.r + p**2 / (self.r * q)
        return c3, kurt * var**2

    def logpdf(self, y, mu):
        r = self.r
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        return (
            special.gammaln(y + r)
            - special.gammaln(r)
            - special.gammaln(y + 1.0)
            + r * np.log(r / (r + mu))
            + y * np.log(mu / (r + mu))
        )

    def check_support(self, y):
        _check_counts(self.kind, y)

    def sample_base(self, rng, mu, size=None):
        return rng.negative_binomial(self.r, self.r / (self.r + mu), size=size)


@dataclass(frozen=True)
class Gamma(BaseFamily):
    """Gamma base with fixed shape alpha and scale theta (sampling only)."""

    alpha: float
    theta: float

    kind = "gamma"
    link = "log"

    def __post_init__(self):
        if not (self.alpha > 0 and self.theta > 0):
            raise ParameterError("gamma shape and scale must be positive")

    def fixed_mean(self):
        return self.alpha * self.theta

    def variance_from_mean(self, mu):
        return self.alpha * self.theta**2 + 0.0 * np.asarray(mu, dtype=float)

    def central_moments(self, mu):
        a, t = self.alpha, self.theta
        return 2.0 * a * t**3 + 0.0 * np.asarray(mu, dtype=float), 3.0 * a * (a + 2.0) * t**4

    def logpdf(self, y, mu=None):
        a, t = self.alpha, self.theta
        y = np.asarray(y, dtype=float)
        return -special.gammaln(a) - a * np.log(t) + (a - 1.0) * np.log(y) - y / t

    def check_support(self, y):
        if np.any(np.asarray(y) <= 0):
            raise DomainError("gamma: response must be positive")

    def sample_base(self, rng, mu=None, size=None):
        return rng.gamma(self.alpha, self.theta, size=size)


@dataclass(frozen=True)
class Exponential(BaseFamily):
    """Exponential base with fixed scale theta (sampling only)."""

    theta: float

    kind = "exponential"
    link = "log"

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError("exponential scale must be positive")

    def fixed_mean(self):
        return self.theta

    def variance_from_mean(self, mu):
        return self.theta**2 + 0.0 * np.asarray(mu, dtype=float)

    def central_moments(self, mu):
        zero = 0.0 * np.asarray(mu, dtype=float)
        return 2.0 * self.theta**3 + zero, 9.0 * self.theta**4 + zero

    def logpdf(self, y, mu=None):
        return -np.log(self.theta) - np.asarray(y, dtype=float) / self.theta

    def check_support(self, y):
        if np.any(np.asarray(y) < 0):
            raise DomainError("exponential: response must be nonnegative")

    def sample_base(self, rng, mu=None, size=None):
        return rng.exponential(self.theta, size=size)


@dataclass(frozen=True)
class Beta(BaseFamily):
    """Beta base with fixed shapes (alpha, beta) on (0, 1) (sampling only)."""

    alpha: float
    beta: float

    kind = "beta"
    link = "logit"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterError("beta shapes must be positive")

    def fixed_mean(self):
        return self.alpha / (self.alpha + self.beta)

    def variance_from_mean(self, mu):
        a, b = self.alpha, self.beta
        s = a + b
        return a * b / (s**2 * (s + 1.0)) + 0.0 * np.asarray(mu, dtype=float)

    def central_moments(self, mu):
        a, b = self.alpha, self.beta
        s = a + b
        var = a * b / (s**2 * (s + 1.0))
        skew = 2.0 * (b - a) * math.sqrt(s + 1.0) / ((s + 2.0) * math.sqrt(a * b))
        excess = (
            6.0
            * ((a - b) ** 2 * (s + 1.0) - a * b * (s + 2.0))
            / (a * b * (s + 2.0) * (s + 3.0))
        )
        zero = 0.0 * np.asarray(mu, dtype=float)
        return skew * var**1.5 + zero, (3.0 + excess) * var**2 + zero

    def logpdf(self, y, mu=None):
        a, b = self.alpha, self.beta
        y = np.asarray(y, dtype=float)
        return (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y) - special.betaln(a, b)

    def check_support(self, y):
        y = np.asarray(y)
        if np.any(y <= 0) or np.any(y >= 1):
            raise DomainError("beta: response must lie in (0, 1)")

    def sample_base(self, rng, mu=None, size=None):
        return rng.beta(self.alpha, self.beta, size=size)


@dataclass(frozen=True)
class Binomial(BaseFamily):
    """Binomial base with fixed trial count N and success probability p."""

    n_trials: int
    p: float

    kind = "binomial"
    link = "logit"
    is_discrete = True

    def __post_init__(self):
        if self.n_trials < 1 or int(self.n_trials) != self.n_trials:
            raise ParameterError("binomial trial count must be a positive integer")
        if not 0.0 < self.p < 1.0:
            raise ParameterError("binomial probability must lie in (0, 1)")

    def fixed_mean(self):
        return self.n_trials * self.p

    def variance_from_mean(self, mu):
        v = self.n_trials * self.p * (1.0 - self.p)
        return v + 0.0 * np.asarray(mu, dtype=float)

    def central_moments(self, mu):
        n, p = self.n_trials, self.p
        q = 1.0 - p
        zero = 0.0 * np.asarray(mu, dtype=float)
        c3 = n * p * q * (q - p)
        c4 = 3.0 * (n * p * q) ** 2 + n * p * q * (1.0 - 6.0 * p * q)
        return c3 + zero, c4 + zero

    def logpdf(self, y, mu=None):
        n, p = self.n_trials, self.p
        y = np.asarray(y, dtype=float)
        return (
            special.gammaln(n + 1.0)
            - special.gammaln(y + 1.0)
            - special.gammaln(n - y + 1.0)
            + y * math.log(p)
            + (n - y) * math.log1p(-p)
        )

    def check_support(self, y):
        y = np.asarray(y)
        if np.any(y < 0) or np.any(y > self.n_trials) or np.any(y != np.floor(y)):
            raise DomainError("binomial: response must be an integer in [0, N]")

    def sample_base(self, rng, mu=None, size=None):
        return rng.binomial(self.n_trials, self.p, size=size)


@dataclass(frozen=True)
class Geometric(BaseFamily):
    """Geometric base counting failures before the first success."""

    p: float

    kind = "geometric"
    link = "log"
    is_discrete = True

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ParameterError("geometric probability must lie in (0, 1)")

    def fixed_mean(self):
        return (1.0 - self.p) / self.p

    def variance_from_mean(self, mu):
        q = 1.0 - self.p
        return q / self.p**2 + 0.0 * np.asarray(mu, dtype=float)

    def central_moments(self, mu):
        p = self.p
        q = 1.0 - p
        zero = 0.0 * np.asarray(mu, dtype=float)
        c3 = (2.0 - p) * q / p**3
        c4 = (9.0 + p**2 / q) * (q / p**2) ** 2
        return c3 + zero, c4 + zero

    def logpdf(self, y, mu=None):
        return np.asarray(y, dtype=float) * math.log1p(-self.p) + math.log(self.p)

    def check_support(self, y):
        _check_counts(self.kind, y)

    def sample_base(self, rng, mu=None, size=None):
        # numpy's geometric counts trials (support 1, 2, ...); shift to failures
        return rng.geometric(self.p, size=size) - 1


_FAMILY_BUILDERS = {
    "gaussian": lambda params: Gaussian(tau=params.get("tau", 1.0)),
    "poisson": lambda params: Poisson(),
    "bernoulli": lambda params: Bernoulli(),
    "negbin": lambda params: NegativeBinomial(r=params.get("r", 1.0)),
    "gamma": lambda params: Gamma(alpha=params.get("alpha", 1.0), theta=params.get("theta", 1.0)),
    "exponential": lambda params: Exponential(theta=params.get("theta", 1.0)),
    "beta": lambda params: Beta(alpha=params.get("alpha", 2.0), beta=params.get("beta", 2.0)),
    "binomial": lambda params: Binomial(n_trials=int(params.get("n_trials", 10)), p=params.get("p", 0.5)),
    "geometric": lambda params: Geometric(p=params.get("p", 0.5)),
}


def family_from_name(name: str, **params) -> BaseFamily:
    """Build a family from its config/CLI name string."""
    key = name.strip().lower()
    if key not in _FAMILY_BUILDERS:
        raise ParameterError(
            f"unknown family {name!r}; expected one of {sorted(_FAMILY_BUILDERS)}"
        )
    return _FAMILY_BUILDERS[key](params)
