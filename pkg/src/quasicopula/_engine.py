"""Vectorized evaluation over units grouped by shape.

Units sharing (dimension, family signature) are stacked into arrays so
loglikelihoods and gradients reduce to a handful of einsums per group.
Invalid parameter regions (link overflow, negative normalizers) yield
-inf loglikelihoods instead of exceptions so line searches can back off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ParameterError, UnsupportedCovarianceError


@dataclass
class UnitGroup:
    X: np.ndarray           # (n, d, p)
    Y: np.ndarray           # (n, d)
    families: tuple         # length d
    d: int
    unit_indices: np.ndarray
    omegas: np.ndarray | None = None   # (m, d, d) shared or (n, m, d, d) per unit

    @property
    def n(self) -> int:
        return self.Y.shape[0]


def build_groups(units, covariance) -> list[UnitGroup]:
    """Stack units by (d, family signature); positional unit indices are
    kept so per-unit VC structures stay associated."""
    units = list(units)
    if not units:
        raise ParameterError("at least one sampling unit is required")
    p = units[0].n_covariates
    buckets: dict = {}
    for idx, u in enumerate(units):
        if u.n_covariates != p:
            raise ParameterError("all units must share the covariate count")
        key = (u.dim, tuple(type(f).__name__ for f in u.families))
        buckets.setdefault(key, []).append(idx)

    groups = []
    per_unit_vc = getattr(covariance, "per_unit", ())
    for (d, _sig), idxs in buckets.items():
        X = np.stack([units[i].X for i in idxs])
        Y = np.stack([units[i].y for i in idxs])
        fams = units[idxs[0]].families
        omegas = None
        if getattr(covariance, "kind", None) == "vc":
            if per_unit_vc:
                omegas = np.stack([covariance.omegas(d, i) for i in idxs])
            else:
                omegas = covariance.omegas(d)
        groups.append(UnitGroup(X=X, Y=Y, families=fams, d=d,
                                unit_indices=np.asarray(idxs), omegas=omegas))
    return groups


def n_units(groups) -> int:
    return sum(g.n for g in groups)


def d_max(groups) -> int:
    return max(g.d for g in groups)


def gamma_for(model, group):
    """Materialized Gamma for the group: (d, d) shared or (n, d, d)."""
    cov = model.covariance
    if cov.kind == "vc":
        return np.tensordot(cov.theta, group.omegas, axes=(0, -3))
    return cov.materialize(group.d)


def trace_half_for(model, group):
    """Half trace of Gamma: scalar for shared structure, (n,) otherwise."""
    cov = model.covariance
    if cov.kind == "vc":
        tro = np.trace(group.omegas, axis1=-2, axis2=-1)  # (m,) or (n, m)
        return 0.5 * tro @ cov.theta
    return cov.trace_term(group.d)


def glm_stats(model, group, derivatives=False):
    """Columnwise mean/variance chain for a group.

    Returns (mu, var, mu_eta, dvar_dmu); the last two are None unless
    ``derivatives``. Any invalid region is signalled with NaNs.
    """
    n, d = group.Y.shape
    eta = group.X @ model.beta  # (n, d)
    mu = np.empty((n, d))
    var = np.empty((n, d))
    mu_eta = np.empty((n, d)) if derivatives else None
    dvar = np.empty((n, d)) if derivatives else None
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for j, fam in enumerate(group.families):
            fam = model.effective_family(fam)
            fm = fam.fixed_mean()
            if fm is None:
                if fam.link == "log":
                    mu[:, j] = np.exp(eta[:, j])
                elif fam.link == "logit":
                    mu[:, j] = special.expit(eta[:, j])
                else:
                    mu[:, j] = eta[:, j]
            else:
                mu[:, j] = fm
            if fam.kind == "gaussian":
                var[:, j] = 1.0 / fam.tau
            elif fam.kind == "poisson":
                var[:, j] = mu[:, j]
            elif fam.kind == "bernoulli":
                var[:, j] = mu[:, j] * (1.0 - mu[:, j])
            elif fam.kind == "negbin":
                var[:, j] = mu[:, j] * (1.0 + mu[:, j] / fam.r)
            else:
                var[:, j] = fam.variance_from_mean(mu[:, j])
            if derivatives:
                dmu, _, dv = fam.mean_derivatives(eta[:, j])
                mu_eta[:, j] = dmu
                dvar[:, j] = dv
    return mu, var, mu_eta, dvar


def _quad_forms(resid, gamma):
    """0.5 r' Gamma r per unit for shared (d,d) or per-unit (n,d,d) Gamma."""
    if gamma.ndim == 2:
        return 0.5 * np.einsum("nd,de,ne->n", resid, gamma, resid)
    return 0.5 * np.einsum("nd,nde,ne->n", resid, gamma, resid)


def _gamma_dot(resid, gamma):
    if gamma.ndim == 2:
        return resid @ gamma
    return np.einsum("nde,ne->nd", gamma, resid)


def loglik(model, groups) -> float:
    """Total loglikelihood; -inf when the parameter point is invalid."""
    total = 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for g in groups:
            mu, var, _, _ = glm_stats(model, g)
            if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var)) and np.all(var > 0)):
                return -np.inf
            logf = 0.0
            for j, fam in enumerate(g.families):
                fam = model.effective_family(fam)
                logf += np.sum(fam.logpdf(g.Y[:, j], mu[:, j]))
            gamma = gamma_for(model, g)
            resid = (g.Y - mu) / np.sqrt(var)
            quad = _quad_forms(resid, gamma)
            tr_half = trace_half_for(model, g)
            if np.any(quad <= -1.0) or np.any(1.0 + tr_half <= 0.0):
                return -np.inf
            total += logf + np.sum(np.log1p(quad))
            total -= np.sum(np.broadcast_to(np.log1p(tr_half), (g.n,)))
    return float(total) if np.isfinite(total) else -np.inf


def beta_score_hess(model, groups):
    """Exact score and negative-semidefinite approximate Hessian in beta."""
    p = model.beta.size
    score = np.zeros(p)
    hess = np.zeros((p, p))
    for g in groups:
        mu, var, mu_eta, dvar = glm_stats(model, g, derivatives=True)
        sd = np.sqrt(var)
        resid = (g.Y - mu) / sd
        gamma = gamma_for(model, g)
        v = _gamma_dot(resid, gamma)
        quad = _quad_forms(resid, gamma)
        denom = 1.0 + quad

        w1 = mu_eta / var
        score += np.einsum("ndp,nd->p", g.X, w1 * (g.Y - mu))

        # rows of the residual Jacobian: d r_j / d eta_j times x_j
        a = -mu_eta / sd - 0.5 * (g.Y - mu) * dvar * mu_eta / sd**3
        U = np.einsum("ndp,nd->np", g.X, a * v)
        score += U.T @ (1.0 / denom)

        w2 = mu_eta**2 / var
        hess -= np.einsum("ndp,nd,ndq->pq", g.X, w2, g.X)
        hess -= np.einsum("np,nq,n->pq", U, U, 1.0 / denom**2)
    return score, hess


def vc_parts(model, groups):
    """Per-unit quadratic/trace accumulators (b, c), aligned to unit order."""
    cov = model.covariance
    if cov.kind != "vc":
        raise UnsupportedCovarianceError("vc_parts requires a variance-components covariance")
    m = cov.n_components
    total = n_units(groups)
    b = np.zeros((total, m))
    c = np.zeros((total, m))
    for g in groups:
        mu, var, _, _ = glm_stats(model, g)
        resid = (g.Y - mu) / np.sqrt(var)
        if g.omegas.ndim == 3:
            bg = 0.5 * np.einsum("nd,mde,ne->nm", resid, g.omegas, resid)
            cg = np.broadcast_to(0.5 * np.trace(g.omegas, axis1=1, axis2=2), (g.n, m))
        else:
            bg = 0.5 * np.einsum("nd,nmde,ne->nm", resid, g.omegas, resid)
            cg = 0.5 * np.trace(g.omegas, axis1=2, axis2=3)
        b[g.unit_indices] = bg
        c[g.unit_indices] = cg
    return b, c


def ar1cs_quads(model, groups):
    """Per-unit d_i and quadratic forms in the correlation part V:
    (r'Vr, r'V'r, r'V''r)."""
    cov = model.covariance
    if cov.kind not in ("ar1", "cs"):
        raise UnsupportedCovarianceError("correlation quadratics require AR1 or CS")
    total = n_units(groups)
    di = np.zeros(total)
    u0 = np.zeros(total)
    u1 = np.zeros(total)
    u2 = np.zeros(total)
    for g in groups:
        mu, var, _, _ = glm_stats(model, g)
        resid = (g.Y - mu) / np.sqrt(var)
        V = cov.materialize(g.d) / cov.sigma2 if cov.sigma2 > 0 else _corr_only(cov, g.d)
        dV, d2V = cov.rho_derivatives(g.d)
        di[g.unit_indices] = g.d
        u0[g.unit_indices] = np.einsum("nd,de,ne->n", resid, V, resid)
        u1[g.unit_indices] = np.einsum("nd,de,ne->n", resid, dV, resid)
        u2[g.unit_indices] = np.einsum("nd,de,ne->n", resid, d2V, resid)
    return di, u0, u1, u2


def _corr_only(cov, d):
    from .covariance import ar1_matrix, cs_matrix

    if cov.kind == "ar1":
        return ar1_matrix(1.0, cov.rho, d)
    return cs_matrix(1.0, cov.rho, d)


def nb_r_derivs(model, groups):
    """First and second derivative of the loglikelihood in the negative
    binomial dispersion r, other parameters held fixed."""
    r = model.r
    d1 = 0.0
    d2 = 0.0
    for g in groups:
        mu, var, _, _ = glm_stats(model, g)
        y = g.Y
        sd = np.sqrt(var)
        resid = (y - mu) / sd
        gamma = gamma_for(model, g)
        v = _gamma_dot(resid, gamma)
        quad = _quad_forms(resid, gamma)
        denom = 1.0 + quad

        d1 += np.sum(
            special.digamma(y + r) - special.digamma(r) + 1.0 + np.log(r)
            - (r + y) / (mu + r) - np.log(mu + r)
        )
        d2 += np.sum(
            special.polygamma(1, y + r) - special.polygamma(1, r) + 1.0 / r
            - 2.0 / (mu + r) + (r + y) / (mu + r) ** 2
        )

        # d sigma / dr and its second derivative (diagonal chain rule)
        s = mu * (mu + r)
        dD = -(mu**2) / (2.0 * r**1.5 * np.sqrt(s))
        d2D = mu**3 / (4.0 * r**1.5 * s**1.5) + 3.0 * mu**2 / (4.0 * r**2.5 * np.sqrt(s))
        dres = -(dD / sd) * resid
        d2res = (2.0 * (dD / sd) ** 2 - d2D / sd) * resid

        rv_dr = np.sum(v * dres, axis=1)
        d1 += np.sum(rv_dr / denom)
        dr_g_dr = np.sum(_gamma_dot(dres, gamma) * dres, axis=1)
        rv_d2r = np.sum(v * d2res, axis=1)
        d2 += np.sum(-(rv_dr / denom) ** 2 + (dr_g_dr + rv_d2r) / denom)
    return float(d1), float(d2)


def gaussian_tau_parts(model, groups):
    """(sum of unit sizes, residual sum of squares, per-unit quad forms)
    for the Gaussian precision updates; quad = tau * q with q the
    unstandardized quadratic form."""
    total_d = 0
    rss = 0.0
    quads = np.zeros(n_units(groups))
    for g in groups:
        mu, var, _, _ = glm_stats(model, g)
        eps = g.Y - mu
        total_d += g.n * g.d
        rss += float(np.sum(eps**2))
        resid = eps / np.sqrt(var)
        gamma = gamma_for(model, g)
        quads[g.unit_indices] = _quad_forms(resid, gamma)
    return total_d, rss, quads
