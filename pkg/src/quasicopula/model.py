"""Quasi-copula joint density, moments, and marginal/conditional laws.

The joint law reweights a product of base densities by the quadratic
factor 1 + r' Gamma r / 2 in the standardized residuals r and divides by
the normalizer 1 + tr(Gamma)/2. Everything here is closed form; no
determinants or matrix inverses appear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, ParameterError
from .families import BaseFamily
from .covariance import CovarianceSpec


@dataclass(frozen=True)
class UnitTemplate:
    """Design matrix and per-coordinate families for one sampling unit."""

    X: np.ndarray
    families: tuple

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        object.__setattr__(self, "X", X)
        families = tuple(self.families)
        object.__setattr__(self, "families", families)
        if X.shape[0] != len(families):
            raise ParameterError("design rows must match the number of families")

    @property
    def dim(self) -> int:
        return self.X.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SamplingUnit(UnitTemplate):
    """One independent group: response vector plus its template."""

    y: np.ndarray = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        if self.y is None:
            raise ParameterError("a sampling unit requires a response vector")
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        object.__setattr__(self, "y", y)
        if y.shape[0] != self.dim:
            raise ParameterError("response length must match the design rows")
        for j, fam in enumerate(self.families):
            fam.check_support(y[j])

    @property
    def template(self) -> UnitTemplate:
        return UnitTemplate(self.X, self.families)


@dataclass(frozen=True)
class QuasiCopulaModel:
    """Model state: regression coefficients, covariance, dispersions."""

    beta: np.ndarray
    covariance: CovarianceSpec
    tau: float | None = None
    r: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if self.tau is not None and not self.tau > 0:
            raise ParameterError("gaussian precision tau must be positive")
        if self.r is not None and not self.r > 0:
            raise ParameterError("negbin dispersion r must be positive")

    def effective_family(self, fam: BaseFamily) -> BaseFamily:
        """Inject the model-level dispersion into a family object."""
        if fam.kind == "gaussian" and self.tau is not None:
            return fam.with_dispersion(self.tau)
        if fam.kind == "negbin" and self.r is not None:
            return fam.with_dispersion(self.r)
        return fam

    def effective_families(self, families) -> tuple:
        return tuple(self.effective_family(f) for f in families)


def coordinate_stats(model: QuasiCopulaModel, template: UnitTemplate):
    """Per-coordinate (mu, var) under the model; fixed-parameter families
    use their own mean, GLM families go through the link."""
    d = template.dim
    mu = np.empty(d)
    var = np.empty(d)
    for j, fam in enumerate(template.families):
        fam = model.effective_family(fam)
        fm = fam.fixed_mean()
        if fm is None:
            mu[j] = fam.mean_from_eta(float(template.X[j] @ model.beta))
        else:
            mu[j] = fm
        var[j] = fam.variance_from_mean(mu[j])
    return mu, var


def standardized_residuals(model: QuasiCopulaModel, unit: SamplingUnit) -> np.ndarray:
    """r_j = (y_j - mu_j) / sigma_j."""
    mu, var = coordinate_stats(model, unit)
    if np.any(var <= 0):
        raise DegenerateError("zero variance coordinate; residuals undefined")
    return (unit.y - mu) / np.sqrt(var)


def _gamma_for(model, template, unit_index):
    return model.covariance.materialize(template.dim, unit_index)


def logdensity_unit(model: QuasiCopulaModel, unit: SamplingUnit, unit_index=None) -> float:
    """Log of the joint quasi-copula density of one unit."""
    mu, var = coordinate_stats(model, unit)
    gamma = _gamma_for(model, unit, unit_index)
    resid = (unit.y - mu) / np.sqrt(var)
    quad = 0.5 * float(resid @ (gamma @ resid))
    logf = 0.0
    for j, fam in enumerate(unit.families):
        fam = model.effective_family(fam)
        fam.check_support(unit.y[j])
        logf += float(fam.logpdf(unit.y[j], mu[j]))
    tr_half = model.covariance.trace_term(unit.dim, unit_index)
    return -np.log1p(tr_half) + logf + np.log1p(quad)


def loglikelihood(model: QuasiCopulaModel, units) -> float:
    """Total loglikelihood over independent units."""
    from . import _engine

    groups = _engine.build_groups(units, model.covariance)
    return _engine.loglik(model, groups)


def exact_moments(model: QuasiCopulaModel, template: UnitTemplate, unit_index=None):
    """Exact mean vector and covariance matrix of the joint law.

    These are the closed forms before any small-Gamma expansion: the
    normalizer stays in place and the mean shift is subtracted from the
    second moments.
    """
    mu, var = coordinate_stats(model, template)
    sigma = np.sqrt(var)
    d = template.dim
    c3 = np.empty(d)
    c4 = np.empty(d)
    for j, fam in enumerate(template.families):
        fam = model.effective_family(fam)
        c3[j], c4[j] = fam.central_moments(mu[j])
    gamma = _gamma_for(model, template, unit_index)
    gd = np.diag(gamma)
    tr = float(np.trace(gamma))
    norm = 1.0 / (1.0 + 0.5 * tr)

    shift = norm * c3 * gd / (2.0 * var)
    mean = mu + shift

    kurt = c4 / var**2
    second = norm * np.outer(sigma, sigma) * gamma
    np.fill_diagonal(second, norm * var * (1.0 + 0.5 * kurt * gd + 0.5 * (tr - gd)))
    cov = second - np.outer(shift, shift)
    return mean, cov


def _split_indices(d, subset):
    s = np.asarray(sorted(set(int(i) for i in subset)), dtype=int)
    if s.size == 0:
        raise ParameterError("coordinate subset must be nonempty")
    if s.min() < 0 or s.max() >= d:
        raise ParameterError("coordinate subset out of range")
    t = np.asarray([i for i in range(d) if i not in set(s.tolist())], dtype=int)
    return s, t


def marginal_density(model: QuasiCopulaModel, template: UnitTemplate, subset, y_s,
                     unit_index=None) -> float:
    """Density of the coordinates in ``subset`` at values ``y_s``.

    ``subset`` holds 0-based coordinate indices; ``y_s`` is ordered by
    ascending index.
    """
    d = template.dim
    s_idx, t_idx = _split_indices(d, subset)
    y_s = np.atleast_1d(np.asarray(y_s, dtype=float))
    if y_s.size != s_idx.size:
        raise ParameterError("y_s length must match the subset size")

    mu, var = coordinate_stats(model, template)
    gamma = _gamma_for(model, template, unit_index)
    tr_half = model.covariance.trace_term(d, unit_index)

    r_s = (y_s - mu[s_idx]) / np.sqrt(var[s_idx])
    gamma_s = gamma[np.ix_(s_idx, s_idx)]
    quad_s = 0.5 * float(r_s @ (gamma_s @ r_s))
    tr_t_half = 0.5 * float(np.trace(gamma[np.ix_(t_idx, t_idx)])) if t_idx.size else 0.0

    logf = 0.0
    for pos, j in enumerate(s_idx):
        fam = model.effective_family(template.families[j])
        fam.check_support(y_s[pos])
        logf += float(fam.logpdf(y_s[pos], mu[j]))
    return float(np.exp(logf) * (1.0 + quad_s + tr_t_half) / (1.0 + tr_half))


def conditional_density(model: QuasiCopulaModel, template: UnitTemplate, subset, y_s,
                        y_t, unit_index=None) -> float:
    """Density of Y_S given Y_T = y_t, with S and T partitioning coordinates."""
    d = template.dim
    s_idx, t_idx = _split_indices(d, subset)
    y_s = np.atleast_1d(np.asarray(y_s, dtype=float))
    y_t = np.atleast_1d(np.asarray(y_t, dtype=float))
    if y_s.size != s_idx.size or y_t.size != t_idx.size:
        raise ParameterError("y_s/y_t lengths must match the S/T partition")

    mu, var = coordinate_stats(model, template)
    sigma = np.sqrt(var)
    gamma = _gamma_for(model, template, unit_index)

    y = np.empty(d)
    y[s_idx] = y_s
    y[t_idx] = y_t
    resid = (y - mu) / sigma
    quad = 0.5 * float(resid @ (gamma @ resid))

    r_t = resid[t_idx]
    gamma_t = gamma[np.ix_(t_idx, t_idx)]
    quad_t = 0.5 * float(r_t @ (gamma_t @ r_t)) if t_idx.size else 0.0
    tr_s_half = 0.5 * float(np.trace(gamma[np.ix_(s_idx, s_idx)]))
    d_s = 1.0 / (1.0 + quad_t + tr_s_half)

    logf = 0.0
    for pos, j in enumerate(s_idx):
        fam = model.effective_family(template.families[j])
        fam.check_support(y_s[pos])
        logf += float(fam.logpdf(y_s[pos], mu[j]))
    return float(d_s * np.exp(logf) * (1.0 + quad))


@dataclass(frozen=True)
class ConditionalMoments:
    """Conditional mean (exact) and variance/covariance (small-Gamma forms).

    The variance and covariance drop terms that are second order in the
    perturbation matrix, hence ``variance_is_approximate``.
    """

    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray
    variance_is_approximate: bool = True


def conditional_moments(model: QuasiCopulaModel, template: UnitTemplate, subset,
                        y_t, unit_index=None) -> ConditionalMoments:
    """Moments of Y_S given Y_T = y_t."""
    d = template.dim
    s_idx, t_idx = _split_indices(d, subset)
    y_t = np.atleast_1d(np.asarray(y_t, dtype=float))
    if y_t.size != t_idx.size:
        raise ParameterError("y_t length must match the complement size")

    mu, var = coordinate_stats(model, template)
    sigma = np.sqrt(var)
    gamma = _gamma_for(model, template, unit_index)

    r_t = (y_t - mu[t_idx]) / sigma[t_idx] if t_idx.size else np.zeros(0)
    gamma_t = gamma[np.ix_(t_idx, t_idx)]
    quad_t = 0.5 * float(r_t @ (gamma_t @ r_t)) if t_idx.size else 0.0
    tr_s_half = 0.5 * float(np.trace(gamma[np.ix_(s_idx, s_idx)]))
    d_s = 1.0 / (1.0 + quad_t + tr_s_half)

    c3 = np.empty(s_idx.size)
    c4 = np.empty(s_idx.size)
    for pos, j in enumerate(s_idx):
        fam = model.effective_family(template.families[j])
        c3[pos], c4[pos] = fam.central_moments(mu[j])

    gd = np.diag(gamma)[s_idx]
    cross = gamma[np.ix_(t_idx, s_idx)].T @ r_t if t_idx.size else np.zeros(s_idx.size)
    mean = mu[s_idx] + d_s * (c3 * gd / (2.0 * var[s_idx]) + sigma[s_idx] * cross)

    variance = (
        var[s_idx]
        + 0.5 * (c4 / var[s_idx] - var[s_idx]) * gd
        + c3 * cross / sigma[s_idx]
    )
    covariance = np.outer(sigma[s_idx], sigma[s_idx]) * gamma[np.ix_(s_idx, s_idx)]
    np.fill_diagonal(covariance, variance)
    return ConditionalMoments(mean=mean, variance=variance, covariance=covariance)


def bivariate_design(x: np.ndarray) -> np.ndarray:
    """Block-diagonal two-outcome design [[x', 0], [0, x']] from one
    shared covariate vector, for jointly estimated mixed outcomes."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = x.size
    X = np.zeros((2, 2 * p))
    X[0, :p] = x
    X[1, p:] = x
    return X
