"""Numeric test-support oracles: quadrature and truncated summation.

Everything here evaluates the joint density directly from scipy.stats
base distributions and the defining formula, independent of the library
code paths it is used to check. Intended for tests and validation, not
for production fitting.

Discrete supports are truncated at cumulative base mass 1 - 1e-12 with a
hard cap of 1e4 points per coordinate to bound runtime.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from .errors import ParameterError
from .model import QuasiCopulaModel, UnitTemplate, coordinate_stats

_TAIL = 1e-12
_MAX_POINTS = 10_000
_GL_POINTS = 240


def base_distribution(family, mu):
    """Frozen scipy.stats distribution for a family at mean mu."""
    kind = family.kind
    if kind == "gaussian":
        return stats.norm(loc=mu, scale=family.tau**-0.5)
    if kind == "poisson":
        return stats.poisson(mu)
    if kind == "bernoulli":
        return stats.bernoulli(mu)
    if kind == "negbin":
        return stats.nbinom(family.r, family.r / (family.r + mu))
    if kind == "gamma":
        return stats.gamma(family.alpha, scale=family.theta)
    if kind == "exponential":
        return stats.expon(scale=family.theta)
    if kind == "beta":
        return stats.beta(family.alpha, family.beta)
    if kind == "binomial":
        return stats.binom(family.n_trials, family.p)
    if kind == "geometric":
        # failures before the first success
        return stats.nbinom(1, family.p)
    raise ParameterError(f"no oracle distribution for family {kind}")


def coordinate_nodes(family, mu, gl_points=_GL_POINTS):
    """(nodes, weights, logpdf-at-nodes) for one coordinate.

    Discrete coordinates enumerate their truncated support with unit
    weights; continuous coordinates use Gauss-Legendre nodes on a
    quantile box.
    """
    dist = base_distribution(family, mu)
    if family.is_discrete:
        lo = int(dist.ppf(_TAIL))
        hi = int(dist.ppf(1.0 - _TAIL)) + 1
        hi = min(hi, lo + _MAX_POINTS - 1)
        nodes = np.arange(lo, hi + 1, dtype=float)
        weights = np.ones_like(nodes)
        logp = dist.logpmf(nodes)
    else:
        lo = dist.ppf(1e-14)
        hi = dist.ppf(1.0 - 1e-14)
        x, w = np.polynomial.legendre.leggauss(gl_points)
        nodes = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        weights = 0.5 * (hi - lo) * w
        logp = dist.logpdf(nodes)
    return nodes, weights, logp


def _grid(model: QuasiCopulaModel, template: UnitTemplate, gl_points=_GL_POINTS):
    """Tensor grid over the support of a d<=2 template.

    Returns (points, weights, density) where density is evaluated from
    the defining formula with scipy base densities.
    """
    d = template.dim
    if d > 2:
        raise ParameterError("grid oracle supports d <= 2 only")
    mu, var = coordinate_stats(model, template)
    sigma = np.sqrt(var)
    gamma = model.covariance.materialize(d)
    norm = 1.0 / (1.0 + 0.5 * float(np.trace(gamma)))
    fams = model.effective_families(template.families)

    per_coord = [coordinate_nodes(fams[j], mu[j], gl_points) for j in range(d)]
    if d == 1:
        pts = per_coord[0][0][:, None]
        wts = per_coord[0][1]
        logp = per_coord[0][2]
    else:
        (x1, w1, l1), (x2, w2, l2) = per_coord
        pts = np.column_stack(
            [np.repeat(x1, x2.size), np.tile(x2, x1.size)]
        )
        wts = np.repeat(w1, x2.size) * np.tile(w2, x1.size)
        logp = np.repeat(l1, x2.size) + np.tile(l2, x1.size)

    resid = (pts - mu) / sigma
    quad = 0.5 * np.einsum("nd,de,ne->n", resid, gamma, resid)
    dens = norm * np.exp(logp) * (1.0 + quad)
    return pts, wts, dens


def numeric_normalization(model, template, gl_points=_GL_POINTS) -> float:
    """Total mass of the joint density by quadrature/summation."""
    _, wts, dens = _grid(model, template, gl_points)
    return float(np.sum(wts * dens))


def numeric_moments(model, template, gl_points=_GL_POINTS):
    """Mean and covariance of the joint density by quadrature/summation."""
    pts, wts, dens = _grid(model, template, gl_points)
    mass = np.sum(wts * dens)
    mean = (wts * dens) @ pts / mass
    centered = pts - mean
    cov = np.einsum("n,nd,ne->de", wts * dens, centered, centered) / mass
    return mean, cov


def numeric_marginal(model, template, subset, y_s, gl_points=_GL_POINTS) -> float:
    """Marginal density of Y_subset at y_s by integrating out the rest."""
    d = template.dim
    subset = sorted(set(int(i) for i in subset))
    t_idx = [j for j in range(d) if j not in subset]
    mu, var = coordinate_stats(model, template)
    sigma = np.sqrt(var)
    gamma = model.covariance.materialize(d)
    norm = 1.0 / (1.0 + 0.5 * float(np.trace(gamma)))
    fams = model.effective_families(template.families)

    y = np.zeros(d)
    y[subset] = np.atleast_1d(y_s)
    log_fixed = sum(
        float(base_distribution(fams[j], mu[j]).logpmf(y[j])
              if fams[j].is_discrete else base_distribution(fams[j], mu[j]).logpdf(y[j]))
        for j in subset
    )
    if not t_idx:
        resid = (y - mu) / sigma
        quad = 0.5 * float(resid @ gamma @ resid)
        return float(norm * np.exp(log_fixed) * (1.0 + quad))
    if len(t_idx) > 1:
        raise ParameterError("marginal oracle integrates out one coordinate only")
    j = t_idx[0]
    nodes, wts, logp = coordinate_nodes(fams[j], mu[j], gl_points)
    pts = np.tile(y, (nodes.size, 1))
    pts[:, j] = nodes
    resid = (pts - mu) / sigma
    quad = 0.5 * np.einsum("nd,de,ne->n", resid, gamma, resid)
    vals = norm * np.exp(log_fixed + logp) * (1.0 + quad)
    return float(np.sum(wts * vals))


def numeric_conditional_moments(model, template, index, y_t, gl_points=_GL_POINTS):
    """Mean and variance of coordinate ``index`` given the other
    coordinate(s) fixed at y_t, for d == 2 templates."""
    d = template.dim
    if d != 2:
        raise ParameterError("conditional oracle supports d == 2 only")
    other = 1 - index
    mu, var = coordinate_stats(model, template)
    sigma = np.sqrt(var)
    gamma = model.covariance.materialize(d)
    fams = model.effective_families(template.families)

    nodes, wts, logp = coordinate_nodes(fams[index], mu[index], gl_points)
    pts = np.zeros((nodes.size, 2))
    pts[:, index] = nodes
    pts[:, other] = float(np.atleast_1d(y_t)[0])
    resid = (pts - mu) / sigma
    quad = 0.5 * np.einsum("nd,de,ne->n", resid, gamma, resid)
    kernel = wts * np.exp(logp) * (1.0 + quad)
    mass = np.sum(kernel)
    mean = float(kernel @ nodes / mass)
    second = float(kernel @ nodes**2 / mass)
    return mean, second - mean**2


def logdensity_direct(model, template, y) -> float:
    """Joint log density from the defining formula with scipy base pdfs."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu, var = coordinate_stats(model, template)
    gamma = model.covariance.materialize(template.dim)
    fams = model.effective_families(template.families)
    logf = 0.0
    for j, fam in enumerate(fams):
        dist = base_distribution(fam, mu[j])
        logf += float(dist.logpmf(y[j]) if fam.is_discrete else dist.logpdf(y[j]))
    resid = (y - mu) / np.sqrt(var)
    quad = 0.5 * float(resid @ gamma @ resid)
    return float(-np.log1p(0.5 * np.trace(gamma)) + logf + np.log1p(quad))
