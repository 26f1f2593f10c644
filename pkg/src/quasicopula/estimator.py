"""Maximum likelihood estimation for quasi-copula models.

The driver alternates a damped Newton step on the regression
coefficients (working-weight approximate Hessian) with monotone MM
updates of the variance components (or safeguarded 1-D Newton steps for
the AR1/CS parameters) and a safeguarded Newton update of the negative
binomial dispersion, then hands the joint parameter vector to a
bound-constrained limited-memory quasi-Newton refinement. Standard
errors come from the inverse observed information assembled from the
same approximate blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from . import _engine
from .covariance import CovarianceSpec, VarianceComponents
from .errors import (
    DegenerateError,
    DesignError,
    InitError,
    NestingError,
    ParameterError,
)
from .model import QuasiCopulaModel

_TAU_FLOOR = 1e-10
_R_FLOOR = 1e-3


@dataclass(frozen=True)
class FitConfig:
    """Iteration limits and tolerances for the fitting pipeline."""

    max_block_iters: int = 10
    max_qn_iters: int = 15
    max_r_newton_iters: int = 10
    tol: float = 1e-6
    line_search_shrink: float = 0.5
    max_backtracks: int = 20
    hessian_ridge: float = 1e-8
    rho_margin: float = 1e-6
    mm_steps_per_block: int = 5

    def __post_init__(self):
        if min(self.max_block_iters, self.max_qn_iters, self.max_r_newton_iters) < 1:
            raise ParameterError("iteration limits must be positive")
        if not 0 < self.tol < 1:
            raise ParameterError("tol must lie in (0, 1)")


@dataclass
class FitResult:
    """Estimates, trace and diagnostics of one maximum likelihood fit."""

    model: QuasiCopulaModel
    loglikelihood: float
    trace: list
    converged: bool
    n_block_iters: int
    n_qn_iters: int
    param_names: list
    params: np.ndarray
    standard_errors: np.ndarray | None = None
    messages: list = field(default_factory=list)

    @property
    def beta(self):
        return self.model.beta

    @property
    def covariance(self):
        return self.model.covariance

    def summary(self) -> str:
        lines = ["parameter      estimate        se"]
        ses = self.standard_errors
        for k, name in enumerate(self.param_names):
            se = "" if ses is None or not np.isfinite(ses[k]) else f"{ses[k]:>12.6g}"
            lines.append(f"{name:<12} {self.params[k]:>12.6g} {se:>12}")
        lines.append(f"loglikelihood {self.loglikelihood:.6f}")
        lines.append(f"converged     {self.converged}")
        return "\n".join(lines)


# ----------------------------------------------------------------------
# parameter packing
# ----------------------------------------------------------------------


class _Layout:
    """Flattened (beta | covariance | dispersion) parameter vector."""

    def __init__(self, p, covariance, has_tau, has_r):
        self.p = p
        self.cov_size = covariance.param_vector().size
        self.has_tau = has_tau
        self.has_r = has_r
        self.names = [f"beta{j + 1}" for j in range(p)] + covariance.param_names()
        if has_tau:
            self.names.append("tau")
        if has_r:
            self.names.append("r")

    @property
    def size(self):
        return self.p + self.cov_size + int(self.has_tau) + int(self.has_r)

    def pack(self, model):
        parts = [model.beta, model.covariance.param_vector()]
        if self.has_tau:
            parts.append([model.tau])
        if self.has_r:
            parts.append([model.r])
        return np.concatenate(parts)

    def unpack(self, vec, model):
        beta = vec[: self.p]
        cov = model.covariance.with_params(vec[self.p : self.p + self.cov_size])
        tau = model.tau
        r = model.r
        k = self.p + self.cov_size
        if self.has_tau:
            tau = float(vec[k])
            k += 1
        if self.has_r:
            r = float(vec[k])
        return replace(model, beta=beta, covariance=cov, tau=tau, r=r)

    def bounds(self, covariance, dmax):
        out = [(None, None)] * self.p + covariance.param_bounds(dmax)
        if self.has_tau:
            out.append((_TAU_FLOOR, None))
        if self.has_r:
            out.append((_R_FLOOR, None))
        return out


def _dispersion_kinds(units):
    kinds = {fam.kind for u in units for fam in u.families}
    has_tau = "gaussian" in kinds
    has_r = "negbin" in kinds
    if has_tau and has_r:
        raise ParameterError("mixing gaussian and negbin dispersions is not supported")
    return has_tau, has_r


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------


def _irls(X, y, fams, max_iter=50, tol=1e-10):
    """Independence-model GLM fit by iteratively reweighted least squares."""
    n, p = X.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        eta = X @ beta
        mu = np.empty(n)
        w = np.empty(n)
        z = np.empty(n)
        for fam, rows in fams:
            e = eta[rows]
            m = fam.mean_from_eta(e)
            dmu, _, _ = fam.mean_derivatives(e)
            var = fam.variance_from_mean(m)
            mu[rows] = m
            w[rows] = dmu**2 / var
            z[rows] = e + (y[rows] - m) / dmu
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(z))):
            raise InitError("IRLS diverged: non-finite working response")
        sw = np.sqrt(w)
        new_beta, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        if np.max(np.abs(new_beta - beta)) < tol * (1.0 + np.max(np.abs(beta))):
            beta = new_beta
            break
        beta = new_beta
    if not np.all(np.isfinite(beta)):
        raise InitError("IRLS diverged")
    return beta


def _init_nb_r(y, mu):
    """Method-of-moments dispersion from fitted means."""
    excess = float(np.sum((y - mu) ** 2 - mu))
    if excess <= 0:
        return 100.0
    return float(np.clip(np.sum(mu**2) / excess, 0.1, 1e4))


def init_params(units, covariance, config=None, groups=None):
    """Starting model: independence-model beta, MM-seeded covariance."""
    config = config or FitConfig()
    units = list(units)
    groups = groups or _engine.build_groups(units, covariance)
    has_tau, has_r = _dispersion_kinds(units)

    Xrows = np.vstack([u.X for u in units])
    yrows = np.concatenate([u.y for u in units])
    p = Xrows.shape[1]
    if np.linalg.matrix_rank(Xrows) < p:
        raise DesignError("stacked design matrix is rank deficient")

    # group rows by family kind; negbin rows use Poisson weights initially
    # (same mean structure; r is refined afterwards)
    row_fams: dict = {}
    pos = 0
    for u in units:
        for j, fam in enumerate(u.families):
            if fam.fixed_mean() is not None:
                raise ParameterError(f"{fam.kind} family does not support estimation")
            key = fam if fam.kind != "negbin" else fam.with_dispersion(1e8)
            row_fams.setdefault(key, []).append(pos)
            pos += 1
    fams = [(fam, np.asarray(rows)) for fam, rows in row_fams.items()]
    beta = _irls(Xrows, yrows, fams)

    tau = None
    r = None
    if has_tau:
        rss = float(np.sum((yrows - Xrows @ beta) ** 2))
        if rss <= 0:
            raise DegenerateError("perfect fit: precision is unbounded")
        tau = yrows.size / rss
    if has_r:
        eta = Xrows @ beta
        r = _init_nb_r(yrows, np.exp(eta))

    model = QuasiCopulaModel(beta=beta, covariance=covariance, tau=tau, r=r)

    if covariance.kind == "vc":
        b, c = _engine.vc_parts(model, groups)
        theta = covariance.theta.copy()
        for _ in range(config.mm_steps_per_block):
            theta = theta_mm_step(theta, b, c)
        model = replace(model, covariance=covariance.with_params(theta))
    else:
        # crude total variance from the MM update with the correlation at 1,
        # i.e. a single component with Omega = 11'
        ones_cov = VarianceComponents(
            theta=np.array([covariance.sigma2 if covariance.sigma2 > 0 else 1.0]),
            builders=(lambda d: np.ones((d, d)),),
        )
        ones_groups = _engine.build_groups(units, ones_cov)
        ones_model = replace(model, covariance=ones_cov)
        b, c = _engine.vc_parts(ones_model, ones_groups)
        theta = ones_cov.theta.copy()
        for _ in range(config.mm_steps_per_block):
            theta = theta_mm_step(theta, b, c)
        model = replace(model, covariance=covariance.with_params([float(theta[0]), 0.0]))
    return model


# ----------------------------------------------------------------------
# block updates
# ----------------------------------------------------------------------


def beta_score_and_hessian(model, units):
    """Score and working-weight approximate Hessian in beta."""
    groups = _engine.build_groups(units, model.covariance)
    return _engine.beta_score_hess(model, groups)


def _solve_ascent(hess, score, ridge):
    """Newton direction from the negated approximate Hessian, ridged to
    positive definiteness only when the plain factorization fails."""
    p = score.size
    A = -(hess + hess.T) / 2.0
    scale = max(np.max(np.abs(A)), 1.0)
    bump = 0.0
    for _ in range(12):
        try:
            cf = np.linalg.cholesky(A + bump * np.eye(p) if bump else A)
            return np.linalg.solve(cf.T, np.linalg.solve(cf, score))
        except np.linalg.LinAlgError:
            bump = max(bump * 10.0, ridge * scale)
    return score / scale  # fall back to scaled gradient ascent


def _backtrack(eval_ll, base_ll, direction, apply_step, config):
    """Halving line search accepting any non-decrease of the loglik."""
    t = 1.0
    for _ in range(config.max_backtracks):
        candidate = apply_step(t * direction)
        ll = eval_ll(candidate)
        if np.isfinite(ll) and ll >= base_ll:
            return candidate, ll, True
        t *= config.line_search_shrink
    return None, base_ll, False


def beta_newton_step(model, units, config=None, groups=None):
    """One damped Newton update of beta; never decreases the loglik."""
    config = config or FitConfig()
    groups = groups or _engine.build_groups(units, model.covariance)
    score, hess = _engine.beta_score_hess(model, groups)
    base_ll = _engine.loglik(model, groups)
    if np.max(np.abs(score)) == 0.0:
        return model, base_ll, True
    direction = _solve_ascent(hess, score, config.hessian_ridge)
    new, ll, ok = _backtrack(
        lambda m: _engine.loglik(m, groups),
        base_ll,
        direction,
        lambda step: replace(model, beta=model.beta + step),
        config,
    )
    if not ok:
        return model, base_ll, False
    return new, ll, True


def vc_parts(model, units):
    """Per-unit accumulators b_ik = r'Omega_ik r / 2 and c_ik = tr(Omega_ik)/2."""
    groups = _engine.build_groups(units, model.covariance)
    return _engine.vc_parts(model, groups)


def theta_mm_step(theta, b, c):
    """One multiplicative MM update of the variance components.

    Nonnegativity is preserved and exact zeros stay fixed; the VC
    objective sum ln(1 + theta'b) - sum ln(1 + theta'c) never decreases.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    b = np.atleast_2d(b)
    c = np.atleast_2d(c)
    num = np.sum(b / (1.0 + b @ theta)[:, None], axis=0)
    den = np.sum(c / (1.0 + c @ theta)[:, None], axis=0)
    out = theta.copy()
    active = den > 0
    out[active] = theta[active] * num[active] / den[active]
    return out


def vc_objective(theta, b, c):
    """The theta-section of the loglikelihood for VC structures."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return float(np.sum(np.log1p(b @ theta)) - np.sum(np.log1p(c @ theta)))


def vc_grad_hess(theta, b, c):
    """Gradient and the approximate Hessian of the VC objective."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    db = 1.0 + b @ theta
    dc = 1.0 + c @ theta
    grad = np.sum(b / db[:, None], axis=0) - np.sum(c / dc[:, None], axis=0)
    hess = -np.einsum("nj,nk,n->jk", b, b, 1.0 / db) + np.einsum(
        "nj,nk,n->jk", c, c, 1.0 / dc
    )
    return grad, hess


def ar1_cs_grad_hess(model, units, groups=None):
    """Gradient over (sigma2, rho) and the approximate diagonal Hessian."""
    groups = groups or _engine.build_groups(units, model.covariance)
    cov = model.covariance
    di, u0, u1, u2 = _engine.ar1cs_quads(model, groups)
    s2 = cov.sigma2
    dt = 1.0 + 0.5 * di * s2
    dq = 1.0 + 0.5 * s2 * u0
    g_s2 = float(np.sum(-0.5 * di / dt) + np.sum(0.5 * u0 / dq))
    g_rho = float(np.sum(0.5 * s2 * u1 / dq))
    h_s2 = float(np.sum((0.5 * di / dt) ** 2) - np.sum((0.5 * u0 / dq) ** 2))
    h_rho = -float(np.sum((0.5 * s2 * u1 / dq) ** 2))
    if cov.kind == "ar1":
        h_rho += float(np.sum(0.5 * s2 * u2 / dq))
    return np.array([g_s2, g_rho]), np.diag([h_s2, h_rho])


def _scalar_newton(model, groups, config, which, bounds):
    """Safeguarded 1-D Newton on one covariance parameter (sigma2 or rho)."""
    idx = 0 if which == "sigma2" else 1
    grad, hess = ar1_cs_grad_hess(model, None, groups=groups)
    g = grad[idx]
    h = hess[idx, idx]
    if g == 0.0:
        return model, _engine.loglik(model, groups)
    value = model.covariance.param_vector()[idx]
    step = g / -h if h < 0 else np.sign(g) * 0.1 * (1.0 + abs(value))
    lo, hi = bounds

    def apply(s):
        vec = model.covariance.param_vector()
        vec[idx] = np.clip(vec[idx] + s, lo, hi if hi is not None else np.inf)
        return replace(model, covariance=model.covariance.with_params(vec))

    base_ll = _engine.loglik(model, groups)
    new, ll, ok = _backtrack(
        lambda m: _engine.loglik(m, groups), base_ll, step, apply, config
    )
    return (new, ll) if ok else (model, base_ll)


def nb_r_newton_step(model, units, config=None, groups=None):
    """Safeguarded Newton update(s) of the negative binomial dispersion."""
    config = config or FitConfig()
    groups = groups or _engine.build_groups(units, model.covariance)
    if model.r is None:
        raise ParameterError("model has no negative binomial dispersion")
    current = model
    ll = _engine.loglik(current, groups)
    for _ in range(config.max_r_newton_iters):
        d1, d2 = _engine.nb_r_derivs(current, groups)
        if not (np.isfinite(d1) and np.isfinite(d2)):
            break  # skip the update, keep the last valid dispersion
        info = -d2
        if info <= 0:
            info = 1.0  # keep the step an ascent direction
        step = d1 / info
        new, new_ll, ok = _backtrack(
            lambda m: _engine.loglik(m, groups),
            ll,
            step,
            lambda s: replace(current, r=max(current.r + s, _R_FLOOR)),
            config,
        )
        if not ok or abs(new.r - current.r) < 1e-10 * (1.0 + current.r):
            if ok:
                current, ll = new, new_ll
            break
        current, ll = new, new_ll
    return current, ll


def gaussian_tau_mm_step(model, units, groups=None):
    """Joint MM update of the Gaussian precision and (for VC) the
    variance components; the Gaussian-base objective never decreases."""
    groups = groups or _engine.build_groups(units, model.covariance)
    if model.tau is None:
        raise ParameterError("model has no gaussian precision")
    total_d, rss, quads = _engine.gaussian_tau_parts(model, groups)
    if rss <= 0:
        raise DegenerateError("zero residual sum of squares; tau diverges")
    new_tau = (total_d + 2.0 * float(np.sum(quads / (1.0 + quads)))) / rss
    new_cov = model.covariance
    if model.covariance.kind == "vc":
        b, c = _engine.vc_parts(model, groups)
        new_cov = model.covariance.with_params(
            theta_mm_step(model.covariance.theta, b, c)
        )
    return replace(model, tau=max(new_tau, _TAU_FLOOR), covariance=new_cov)


# ----------------------------------------------------------------------
# full gradient and the fit driver
# ----------------------------------------------------------------------


def full_gradient(model, units, layout=None, groups=None):
    """Analytic gradient of the loglikelihood in the packed parameters."""
    groups = groups or _engine.build_groups(units, model.covariance)
    layout = layout or _Layout(
        model.beta.size, model.covariance, model.tau is not None, model.r is not None
    )
    g_beta, _ = _engine.beta_score_hess(model, groups)
    parts = [g_beta]
    if model.covariance.kind == "vc":
        b, c = _engine.vc_parts(model, groups)
        g_cov, _ = vc_grad_hess(model.covariance.theta, b, c)
        parts.append(g_cov)
    else:
        g_cov, _ = ar1_cs_grad_hess(model, None, groups=groups)
        parts.append(g_cov)
    if layout.has_tau:
        total_d, rss, quads = _engine.gaussian_tau_parts(model, groups)
        g_tau = total_d / (2.0 * model.tau) - 0.5 * rss + float(
            np.sum((quads / model.tau) / (1.0 + quads))
        )
        parts.append([g_tau])
    if layout.has_r:
        d1, _ = _engine.nb_r_derivs(model, groups)
        parts.append([d1])
    return np.concatenate(parts)


def _hessian_scale(model, groups, layout):
    """Diagonal preconditioner for the quasi-Newton phase, seeded by the
    approximate Hessian blocks: scale_k ~ curvature_k^{-1/2}."""
    _, h_beta = _engine.beta_score_hess(model, groups)
    diag = [np.abs(np.diag(h_beta))]
    if model.covariance.kind == "vc":
        b, c = _engine.vc_parts(model, groups)
        _, h_cov = vc_grad_hess(model.covariance.theta, b, c)
        diag.append(np.abs(np.diag(h_cov)))
    else:
        _, h_cov = ar1_cs_grad_hess(model, None, groups=groups)
        diag.append(np.abs(np.diag(h_cov)))
    if layout.has_tau:
        total_d, _, quads = _engine.gaussian_tau_parts(model, groups)
        h_tau = -total_d / (2.0 * model.tau**2) - float(
            np.sum(((quads / model.tau) / (1.0 + quads)) ** 2)
        )
        diag.append([abs(h_tau)])
    if layout.has_r:
        _, d2 = _engine.nb_r_derivs(model, groups)
        diag.append([abs(d2)])
    diag = np.concatenate(diag)
    return 1.0 / np.sqrt(np.clip(diag, 1e-8, 1e16))


def _covariance_phase(model, groups, config, has_tau):
    cov = model.covariance
    if cov.kind == "vc":
        if has_tau:
            for _ in range(config.mm_steps_per_block):
                model = gaussian_tau_mm_step(model, None, groups=groups)
        else:
            b, c = _engine.vc_parts(model, groups)
            theta = cov.theta.copy()
            for _ in range(config.mm_steps_per_block):
                theta = theta_mm_step(theta, b, c)
            model = replace(model, covariance=cov.with_params(theta))
        return model
    lo, hi = cov.param_bounds(_engine.d_max(groups))[1]
    for _ in range(config.mm_steps_per_block):
        if has_tau:
            model = gaussian_tau_mm_step(model, None, groups=groups)
        model, _ = _scalar_newton(model, groups, config, "sigma2", (0.0, None))
        model, _ = _scalar_newton(model, groups, config, "rho", (lo, hi))
    return model


def fit(units, covariance: CovarianceSpec, config: FitConfig | None = None,
        compute_se: bool = True) -> FitResult:
    """Block ascent followed by bound-constrained quasi-Newton refinement."""
    config = config or FitConfig()
    units = list(units)
    groups = _engine.build_groups(units, covariance)
    has_tau, has_r = _dispersion_kinds(units)
    messages: list[str] = []

    model = init_params(units, covariance, config, groups=groups)
    layout = _Layout(model.beta.size, model.covariance, has_tau, has_r)

    ll = _engine.loglik(model, groups)
    if not np.isfinite(ll):
        raise InitError("initial parameters give a degenerate loglikelihood")
    trace = [ll]
    n_blocks = 0
    for _ in range(config.max_block_iters):
        n_blocks += 1
        block_start = ll
        model, ll, _ = beta_newton_step(model, units, config, groups=groups)
        model = _covariance_phase(model, groups, config, has_tau)
        if has_r:
            model, _ = nb_r_newton_step(model, units, config, groups=groups)
        ll = _engine.loglik(model, groups)
        trace.append(ll)
        if abs(ll - block_start) < config.tol * (1.0 + abs(ll)):
            break

    # joint refinement of (beta, covariance[, dispersion]); L-BFGS-B runs
    # in rounds of max_qn_iters iterations, preconditioned each round by
    # the approximate-Hessian diagonal, until the joint tolerance holds
    bounds = layout.bounds(model.covariance, _engine.d_max(groups))

    def projected_grad_norm(m):
        grad = full_gradient(m, units, layout, groups)
        x = layout.pack(m)
        for k, (lo, hi) in enumerate(bounds):
            if lo is not None and x[k] <= lo + 1e-12 and grad[k] < 0:
                grad[k] = 0.0
            if hi is not None and x[k] >= hi - 1e-12 and grad[k] > 0:
                grad[k] = 0.0
        return float(np.max(np.abs(grad)))

    lo_vec = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi_vec = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    qn_iters = 0
    rel_change = np.inf
    proj_norm = projected_grad_norm(model)
    for _ in range(config.max_block_iters):
        if rel_change < config.tol * (1.0 + abs(ll)) and proj_norm < config.tol * (
            1.0 + abs(ll)
        ):
            break
        scale = _hessian_scale(model, groups, layout)

        def objective(z, scale=scale):
            m = layout.unpack(z * scale, model)
            val = _engine.loglik(m, groups)
            if not np.isfinite(val):
                return 1e25, np.zeros_like(z)
            return -val, -full_gradient(m, units, layout, groups) * scale

        x = np.clip(layout.pack(model), lo_vec, hi_vec)
        z_bounds = [
            (
                None if b[0] is None else b[0] / s,
                None if b[1] is None else b[1] / s,
            )
            for b, s in zip(bounds, scale)
        ]
        res = optimize.minimize(
            objective,
            x / scale,
            jac=True,
            method="L-BFGS-B",
            bounds=z_bounds,
            options={
                "maxiter": config.max_qn_iters,
                "maxcor": 10,
                "ftol": 1e-14,
                "gtol": 1e-12,
            },
        )
        qn_iters += int(res.nit)
        candidate = layout.unpack(np.clip(res.x * scale, lo_vec, hi_vec), model)
        cand_ll = _engine.loglik(candidate, groups)
        if not np.isfinite(cand_ll) or cand_ll < ll - 1e-10:
            break  # refinement failed to improve; keep the block result
        rel_change = abs(cand_ll - ll)
        model, ll = candidate, cand_ll
        trace.append(ll)
        proj_norm = projected_grad_norm(model)
        if res.nit == 0:
            break

    rel_change = abs(trace[-1] - trace[-2]) if len(trace) > 1 else np.inf
    converged = bool(
        rel_change < config.tol * (1.0 + abs(ll))
        and proj_norm < config.tol * (1.0 + abs(ll))
    )
    if not converged:
        messages.append(
            f"not converged: rel. loglik change {rel_change:.3g}, "
            f"projected gradient {proj_norm:.3g}"
        )

    se = None
    if compute_se:
        se, se_msgs = observed_information_se(model, units, groups=groups)
        messages.extend(se_msgs)

    return FitResult(
        model=model,
        loglikelihood=ll,
        trace=trace,
        converged=converged,
        n_block_iters=n_blocks,
        n_qn_iters=qn_iters,
        param_names=layout.names,
        params=layout.pack(model),
        standard_errors=se,
        messages=messages,
    )


# ----------------------------------------------------------------------
# inference
# ----------------------------------------------------------------------


def observed_information_se(model, units, groups=None):
    """Standard errors from the approximate observed information.

    Diagonal blocks use the analytic approximations; cross blocks come
    from central finite differences of the analytic gradients. Returns
    (se, messages); se is None when the information is not positive
    definite.
    """
    groups = groups or _engine.build_groups(units, model.covariance)
    layout = _Layout(
        model.beta.size, model.covariance, model.tau is not None, model.r is not None
    )
    n = layout.size
    x = layout.pack(model)
    bounds = layout.bounds(model.covariance, _engine.d_max(groups))

    # full Hessian by finite differences of the analytic gradient;
    # one-sided steps keep probes inside active bounds
    hess = np.zeros((n, n))
    for k in range(n):
        h = 1e-5 * (1.0 + abs(x[k]))
        lo, hi = bounds[k]
        xm = x.copy()
        xp = x.copy()
        if lo is not None and x[k] - h < lo:
            xp[k] += h
            denom = h
        elif hi is not None and x[k] + h > hi:
            xm[k] -= h
            denom = h
        else:
            xp[k] += h
            xm[k] -= h
            denom = 2.0 * h
        gp = full_gradient(layout.unpack(xp, model), units, layout, groups)
        gm = full_gradient(layout.unpack(xm, model), units, layout, groups)
        hess[:, k] = (gp - gm) / denom

    # overwrite diagonal blocks with the analytic approximations
    p = layout.p
    _, h_beta = _engine.beta_score_hess(model, groups)
    hess[:p, :p] = h_beta
    sl = slice(p, p + layout.cov_size)
    if model.covariance.kind == "vc":
        b, c = _engine.vc_parts(model, groups)
        _, h_cov = vc_grad_hess(model.covariance.theta, b, c)
        hess[sl, sl] = h_cov
    else:
        _, h_cov = ar1_cs_grad_hess(model, None, groups=groups)
        cross = hess[p, p + 1]
        hess[sl, sl] = h_cov
        hess[p, p + 1] = hess[p + 1, p] = cross  # FD cross term within the block
    k = p + layout.cov_size
    if layout.has_tau:
        total_d, _, quads = _engine.gaussian_tau_parts(model, groups)
        hess[k, k] = -total_d / (2.0 * model.tau**2) - float(
            np.sum(((quads / model.tau) / (1.0 + quads)) ** 2)
        )
        k += 1
    if layout.has_r:
        _, d2 = _engine.nb_r_derivs(model, groups)
        hess[k, k] = d2

    info = -(hess + hess.T) / 2.0
    try:
        cf = np.linalg.cholesky(info)
        inv = np.linalg.inv(cf)
        cov = inv.T @ inv
        return np.sqrt(np.diag(cov)), []
    except np.linalg.LinAlgError:
        return None, ["observed information not positive definite; no standard errors"]


def lrt(fit_full: FitResult, fit_null: FitResult, df: int):
    """Likelihood ratio statistic and chi-square p-value.

    Tests with variance components pinned at the boundary are
    conservative because of the nonnegativity constraints.
    """
    if df < 1:
        raise ParameterError("degrees of freedom must be positive")
    ll_f = fit_full.loglikelihood
    ll_n = fit_null.loglikelihood
    if ll_f < ll_n - 1e-6:
        raise NestingError("full-model loglikelihood is below the null")
    statistic = max(0.0, 2.0 * (ll_f - ll_n))
    pvalue = float(stats.chi2.sf(statistic, df)) if statistic > 0 else 1.0
    return statistic, pvalue
