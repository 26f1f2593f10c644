"""Random deviate generation from the quasi-copula density.

Vectors are built one coordinate at a time: the first coordinate from
its marginal law and each later coordinate from its conditional law
given the previous draws. Every stage density has the same shape

    c * f(y) * (c0 + c1*y + c2*y^2)

with f the base density, so discrete stages reduce to an inverse-method
probability walk and continuous stages to inverting a CDF assembled from
three closed-form special-function terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import NumericError, ParameterError, TruncationError
from .model import QuasiCopulaModel, UnitTemplate, coordinate_stats

_NORM_TOL = 1e-10
_DISCRETE_CAP = 100_000
_TAIL_EPS = 1e-12


@dataclass(frozen=True)
class QuadraticKernelCoeffs:
    """Coefficients of a stage density c * f(y) * (c0 + c1 y + c2 y^2).

    d1 and d2 are the first and second raw moments of the base law;
    normalization requires c * (c0 + c1*d1 + c2*d2) = 1.
    """

    c: float
    c0: float
    c1: float
    c2: float
    d1: float
    d2: float

    def __post_init__(self):
        total = self.c * (self.c0 + self.c1 * self.d1 + self.c2 * self.d2)
        if not math.isfinite(total) or abs(total - 1.0) > _NORM_TOL:
            raise ParameterError(
                f"kernel normalization violated: c*(c0+c1*d1+c2*d2) = {total!r}"
            )

    def quadratic(self, y):
        return self.c0 + self.c1 * y + self.c2 * y * y


def conditional_coeffs(model: QuasiCopulaModel, template: UnitTemplate, index: int,
                       r_prefix, unit_index=None) -> QuadraticKernelCoeffs:
    """Kernel coefficients for coordinate ``index`` (0-based) given the
    standardized residuals of the previous coordinates."""
    d = template.dim
    if not 0 <= index < d:
        raise ParameterError("coordinate index out of range")
    r_prefix = np.asarray(r_prefix, dtype=float)
    if r_prefix.size != index:
        raise ParameterError("r_prefix must hold one residual per prior coordinate")

    mu, var = coordinate_stats(model, template)
    gamma = model.covariance.materialize(d, unit_index)
    gd = np.diag(gamma)

    quad_prev = 0.5 * float(r_prefix @ gamma[:index, :index] @ r_prefix)
    tail_half = 0.5 * float(np.sum(gd[index:]))
    d_prev = 1.0 + quad_prev + tail_half

    s = float(gamma[index, :index] @ r_prefix)
    m = mu[index]
    v = var[index]
    sd = math.sqrt(v)
    g = gd[index]

    c0 = d_prev - 0.5 * g - m * s / sd + 0.5 * g * m * m / v
    c1 = s / sd - g * m / v
    c2 = 0.5 * g / v
    return QuadraticKernelCoeffs(
        c=1.0 / d_prev, c0=c0, c1=c1, c2=c2, d1=m, d2=v + m * m
    )


def marginal_coeffs(model: QuasiCopulaModel, template: UnitTemplate,
                    unit_index=None) -> QuadraticKernelCoeffs:
    """Kernel coefficients for the first coordinate's marginal law."""
    return conditional_coeffs(model, template, 0, (), unit_index)


# ----------------------------------------------------------------------
# discrete stages
# ----------------------------------------------------------------------


def _support_upper(family) -> float:
    return family.n_trials if family.kind == "binomial" else math.inf


def _outward_order(start: int, upper: float):
    """Probe order start, start+1, start-1, start+2, ... within [0, upper]."""
    yield start
    step = 1
    while True:
        hi = start + step
        lo = start - step
        emitted = False
        if hi <= upper:
            yield hi
            emitted = True
        if lo >= 0:
            yield lo
            emitted = True
        if not emitted:
            return
        step += 1


def sample_discrete_quadratic(family, coeffs: QuadraticKernelCoeffs, rng) -> int:
    """Exact inverse-method draw from a discrete quadratic kernel.

    Probing starts at the integer part of the base mean and alternates
    outward so most of the mass is covered early.
    """
    if not family.is_discrete:
        raise ParameterError(f"{family.kind} is not discrete")
    upper = _support_upper(family)
    start = int(min(math.floor(coeffs.d1), upper if math.isfinite(upper) else coeffs.d1))
    u = rng.uniform()
    cum = 0.0
    count = 0
    last = start
    for k in _outward_order(start, upper):
        pk = coeffs.c * math.exp(float(family.logpdf(k, coeffs.d1))) * coeffs.quadratic(k)
        if pk > 0.0:
            cum += pk
        last = k
        if u < cum:
            return k
        count += 1
        if count >= _DISCRETE_CAP:
            break
    if cum < 1.0 - _TAIL_EPS:
        raise TruncationError(
            f"discrete kernel mass {cum:.15f} below 1-1e-12 within the enumeration cap"
        )
    return last  # u fell in the < 1e-12 tail sliver


# ----------------------------------------------------------------------
# continuous stages
# ----------------------------------------------------------------------


def kernel_cdf(family, coeffs: QuadraticKernelCoeffs, x):
    """CDF of the continuous quadratic kernel, assembled from the scaled
    base CDF and the two moment-shifted companion CDFs."""
    x = np.asarray(x, dtype=float)
    c, c0, c1, c2 = coeffs.c, coeffs.c0, coeffs.c1, coeffs.c2
    if family.kind == "gaussian":
        m = coeffs.d1
        s = math.sqrt(coeffs.d2 - m * m)
        z = (x - m) / s
        # integrals of z^j against the standard normal: -phi and Phi - z*phi
        a0 = c0 + c1 * m + c2 * m * m
        a1 = s * (c1 + 2.0 * c2 * m)
        a2 = c2 * s * s
        phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        cdf = special.ndtr(z)
        return c * (a0 * cdf - a1 * phi + a2 * (cdf - z * phi))
    if family.kind in ("gamma", "exponential"):
        alpha = family.alpha if family.kind == "gamma" else 1.0
        theta = family.theta
        xs = np.maximum(x, 0.0) / theta
        t1 = special.gammainc(alpha, xs)
        t2 = alpha * theta * special.gammainc(alpha + 1.0, xs)
        t3 = alpha * (alpha + 1.0) * theta**2 * special.gammainc(alpha + 2.0, xs)
        return c * (c0 * t1 + c1 * t2 + c2 * t3)
    if family.kind == "beta":
        a, b = family.alpha, family.beta
        s = a + b
        xc = np.clip(x, 0.0, 1.0)
        t1 = special.betainc(a, b, xc)
        t2 = (a / s) * special.betainc(a + 1.0, b, xc)
        t3 = (a * (a + 1.0) / (s * (s + 1.0))) * special.betainc(a + 2.0, b, xc)
        return c * (c0 * t1 + c1 * t2 + c2 * t3)
    raise ParameterError(f"no continuous kernel CDF for family {family.kind}")


def _base_interval(family, q_lo, q_hi):
    """Base-distribution quantiles used to seed the root bracket."""
    if family.kind == "gaussian":
        return None  # handled with ndtri on the standardized scale
    if family.kind in ("gamma", "exponential"):
        alpha = family.alpha if family.kind == "gamma" else 1.0
        return (
            family.theta * special.gammaincinv(alpha, q_lo),
            family.theta * special.gammaincinv(alpha, q_hi),
        )
    if family.kind == "beta":
        return (
            special.betaincinv(family.alpha, family.beta, q_lo),
            special.betaincinv(family.alpha, family.beta, q_hi),
        )
    raise ParameterError(f"{family.kind} is not a continuous sampling family")


def sample_continuous_quadratic(family, coeffs: QuadraticKernelCoeffs, rng) -> float:
    """Inverse-CDF draw from a continuous quadratic kernel.

    F(x) = u is solved by safeguarded Newton with a bisection fallback;
    the initial bracket comes from base quantiles at u/2 and 1-(1-u)/2
    and is expanded geometrically until it straddles the root.
    """
    u = rng.uniform()
    q_lo, q_hi = 0.5 * u, 1.0 - 0.5 * (1.0 - u)
    if family.kind == "gaussian":
        m = coeffs.d1
        s = math.sqrt(coeffs.d2 - m * m)
        lo, hi = m + s * special.ndtri(q_lo), m + s * special.ndtri(q_hi)
        span0 = max(hi - lo, s)
    else:
        lo, hi = _base_interval(family, q_lo, q_hi)
        span0 = max(hi - lo, 1e-3)

    def F(x):
        return float(kernel_cdf(family, coeffs, x))

    lower_support = -math.inf if family.kind == "gaussian" else 0.0
    upper_support = 1.0 if family.kind == "beta" else math.inf
    for _ in range(200):
        if F(lo) <= u or lo <= lower_support:
            break
        lo = max(lower_support, lo - span0)
        span0 *= 2.0
    span0 = max(hi - lo, span0)
    for _ in range(200):
        if F(hi) >= u or hi >= upper_support:
            break
        hi = min(upper_support, hi + span0)
        span0 *= 2.0
    lo = max(lo, lower_support if math.isfinite(lower_support) else lo)
    hi = min(hi, upper_support if math.isfinite(upper_support) else hi)
    if not (F(lo) - u <= 1e-12 and F(hi) - u >= -1e-12):
        raise NumericError("failed to bracket the kernel CDF root")

    x = 0.5 * (lo + hi)
    for _ in range(200):
        fx = F(x) - u
        if fx > 0:
            hi = x
        else:
            lo = x
        pdf = coeffs.c * math.exp(float(family.logpdf(x, coeffs.d1))) * coeffs.quadratic(x)
        step_ok = False
        if pdf > 0 and math.isfinite(pdf):
            xn = x - fx / pdf
            if lo < xn < hi:
                x_new = xn
                step_ok = True
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(fx) < 1e-10 and abs(x_new - x) < 1e-12 * (1.0 + abs(x)):
            return x_new
        x = x_new
    return x


def gaussian_first_coordinate_mixture(gamma: np.ndarray, rng) -> float:
    """Standardized first-coordinate draw for a Gaussian base.

    The marginal kernel is a three-component mixture of N(0,1),
    +sqrt(chi2_3) and -sqrt(chi2_3).
    """
    gamma = np.asarray(gamma, dtype=float)
    tr = float(np.trace(gamma))
    denom = 1.0 + 0.5 * tr
    w_side = 0.25 * gamma[0, 0] / denom
    u = rng.uniform()
    if u < 1.0 - 2.0 * w_side:
        return float(rng.normal())
    draw = math.sqrt(rng.chisquare(3))
    return draw if u < 1.0 - w_side else -draw


def gaussian_mixture_weights(gamma: np.ndarray) -> tuple[float, float, float]:
    """(normal, +sqrt(chi2_3), -sqrt(chi2_3)) mixing probabilities."""
    gamma = np.asarray(gamma, dtype=float)
    denom = 1.0 + 0.5 * float(np.trace(gamma))
    w_side = 0.25 * gamma[0, 0] / denom
    return 1.0 - 2.0 * w_side, w_side, w_side


def sample_unit(model: QuasiCopulaModel, template: UnitTemplate, rng,
                unit_index=None) -> np.ndarray:
    """One response vector via sequential conditional sampling."""
    d = template.dim
    mu, var = coordinate_stats(model, template)
    sd = np.sqrt(var)
    y = np.empty(d)
    r_prefix: list[float] = []
    for i in range(d):
        fam = model.effective_family(template.families[i])
        if i == 0 and fam.kind == "gaussian":
            gamma = model.covariance.materialize(d, unit_index)
            r1 = gaussian_first_coordinate_mixture(gamma, rng)
            y[0] = mu[0] + sd[0] * r1
            r_prefix.append(r1)
            continue
        coeffs = conditional_coeffs(model, template, i, r_prefix, unit_index)
        if fam.is_discrete:
            y[i] = sample_discrete_quadratic(fam, coeffs, rng)
        else:
            y[i] = sample_continuous_quadratic(fam, coeffs, rng)
        r_prefix.append((y[i] - mu[i]) / sd[i])
    return y


# ----------------------------------------------------------------------
# vectorized batch sampling
# ----------------------------------------------------------------------


def _batch_discrete_chunk(family, mu_i, c, c0, c1, c2, u, k_max, upper):
    while True:
        k = np.arange(k_max + 1, dtype=float)
        logp = family.logpdf(k[None, :], np.asarray(mu_i, dtype=float)[:, None])
        pk = np.exp(logp) * (c0[:, None] + c1[:, None] * k + c2[:, None] * k**2)
        np.maximum(pk, 0.0, out=pk)
        pk *= c[:, None]
        cum = np.cumsum(pk, axis=1)
        total = cum[:, -1]
        if np.all(total >= 1.0 - _TAIL_EPS) or math.isfinite(upper) or k_max >= _DISCRETE_CAP:
            if np.any(total < 1.0 - _TAIL_EPS) and not math.isfinite(upper):
                raise TruncationError("batch discrete kernel mass below 1-1e-12 at cap")
            idx = np.sum(cum < u[:, None], axis=1)
            return np.minimum(idx, k_max).astype(float)
        k_max = min(2 * k_max + 10, _DISCRETE_CAP)


def _batch_discrete(family, mu_i, c, c0, c1, c2, rng):
    """Inverse-method draws for a whole batch of discrete kernels."""
    n = c.shape[0]
    upper = _support_upper(family)
    if math.isfinite(upper):
        k_max = int(upper)
    else:
        mu_max = float(np.max(mu_i))
        var_max = float(np.max(family.variance_from_mean(mu_max)))
        k_max = int(mu_max + 12.0 * math.sqrt(var_max + 1.0) + 20.0)
    u = rng.uniform(size=n)
    out = np.empty(n, dtype=float)
    chunk = max(1, int(4e6 / (k_max + 1)))
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        out[sl] = _batch_discrete_chunk(
            family, mu_i[sl], c[sl], c0[sl], c1[sl], c2[sl], u[sl], k_max, upper
        )
    return out


def _batch_continuous(family, mu_i, var_i, c, c0, c1, c2, rng):
    """Vectorized inverse-CDF draws by bisection on the assembled CDF."""
    n = c.shape[0]
    u = rng.uniform(size=n)

    if family.kind == "gaussian":
        m = np.asarray(mu_i, dtype=float)
        s = np.sqrt(np.asarray(var_i, dtype=float))
        lo = m - 10.0 * s
        hi = m + 10.0 * s
    elif family.kind in ("gamma", "exponential"):
        alpha = family.alpha if family.kind == "gamma" else 1.0
        hi0 = family.theta * float(special.gammaincinv(alpha, 1.0 - 1e-15))
        lo = np.zeros(n)
        hi = np.full(n, hi0 + 10.0 * family.theta)
    elif family.kind == "beta":
        lo = np.zeros(n)
        hi = np.ones(n)
    else:
        raise ParameterError(f"{family.kind} is not a continuous sampling family")

    def F(x):
        out = np.empty(n)
        # coefficients vary per draw; evaluate the three terms directly
        if family.kind == "gaussian":
            z = (x - mu_i) / np.sqrt(var_i)
            a0 = c0 + c1 * mu_i + c2 * mu_i**2
            a1 = np.sqrt(var_i) * (c1 + 2.0 * c2 * mu_i)
            a2 = c2 * var_i
            phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
            cdf = special.ndtr(z)
            out = c * (a0 * cdf - a1 * phi + a2 * (cdf - z * phi))
        elif family.kind in ("gamma", "exponential"):
            alpha = family.alpha if family.kind == "gamma" else 1.0
            th = family.theta
            xs = np.maximum(x, 0.0) / th
            out = c * (
                c0 * special.gammainc(alpha, xs)
                + c1 * alpha * th * special.gammainc(alpha + 1.0, xs)
                + c2 * alpha * (alpha + 1.0) * th**2 * special.gammainc(alpha + 2.0, xs)
            )
        else:
            a, b = family.alpha, family.beta
            s_ab = a + b
            xc = np.clip(x, 0.0, 1.0)
            out = c * (
                c0 * special.betainc(a, b, xc)
                + c1 * (a / s_ab) * special.betainc(a + 1.0, b, xc)
                + c2 * (a * (a + 1.0) / (s_ab * (s_ab + 1.0))) * special.betainc(a + 2.0, b, xc)
            )
        return out

    if family.kind == "gaussian":
        for _ in range(60):
            need = F(lo) > u
            if not np.any(need):
                break
            lo = np.where(need, lo - (hi - lo), lo)
        for _ in range(60):
            need = F(hi) < u
            if not np.any(need):
                break
            hi = np.where(need, hi + (hi - lo), hi)
    elif family.kind != "beta":
        for _ in range(60):
            need = F(hi) < u
            if not np.any(need):
                break
            hi = np.where(need, 2.0 * hi, hi)

    for _ in range(80):
        mid = 0.5 * (lo + hi)
        high = F(mid) > u
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def sample_batch(families, mu, var, gamma, rng) -> np.ndarray:
    """Sequential conditional sampling, vectorized over n independent units.

    mu/var have shape (n, d); gamma is (d, d) shared or (n, d, d).
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    var = np.atleast_2d(np.asarray(var, dtype=float))
    n, d = mu.shape
    gamma = np.asarray(gamma, dtype=float)
    shared = gamma.ndim == 2
    if shared:
        gd = np.broadcast_to(np.diag(gamma), (n, d))
    else:
        gd = np.diagonal(gamma, axis1=1, axis2=2)
    tail = np.cumsum(gd[:, ::-1], axis=1)[:, ::-1]  # tail[:, i] = sum_{j>=i} g_jj
    sd = np.sqrt(var)

    y = np.empty((n, d))
    acc = np.zeros((n, d))     # acc[:, j] = sum_{drawn i<j} r_i * gamma[i, j]
    quad_prefix = np.zeros(n)  # 0.5 * r' Gamma r over drawn coordinates

    for i in range(d):
        fam = families[i]
        g_ii = gd[:, i]
        d_prev = 1.0 + quad_prefix + 0.5 * tail[:, i]
        s = acc[:, i]
        m = mu[:, i]
        v = var[:, i]
        c = 1.0 / d_prev
        c0 = d_prev - 0.5 * g_ii - m * s / sd[:, i] + 0.5 * g_ii * m**2 / v
        c1 = s / sd[:, i] - g_ii * m / v
        c2 = 0.5 * g_ii / v

        if i == 0 and fam.kind == "gaussian":
            # marginal of the first coordinate: three-component mixture
            w_side = 0.25 * g_ii / d_prev
            u = rng.uniform(size=n)
            z = rng.normal(size=n)
            chi = np.sqrt(rng.chisquare(3, size=n))
            r1 = np.where(u < 1.0 - 2.0 * w_side, z, np.where(u < 1.0 - w_side, chi, -chi))
            y[:, 0] = m + sd[:, 0] * r1
        elif fam.is_discrete:
            y[:, i] = _batch_discrete(fam, m, c, c0, c1, c2, rng)
        else:
            y[:, i] = _batch_continuous(fam, m, v, c, c0, c1, c2, rng)

        r_i = (y[:, i] - m) / sd[:, i]
        quad_prefix += r_i * s + 0.5 * g_ii * r_i**2
        if shared:
            acc += np.outer(r_i, gamma[i])
        else:
            acc += r_i[:, None] * gamma[:, i, :]
    return y


def sample_units(model: QuasiCopulaModel, template: UnitTemplate, n: int, rng) -> np.ndarray:
    """n independent response vectors sharing one template, shape (n, d)."""
    mu, var = coordinate_stats(model, template)
    gamma = model.covariance.materialize(template.dim)
    fams = model.effective_families(template.families)
    mu_b = np.broadcast_to(mu, (n, template.dim))
    var_b = np.broadcast_to(var, (n, template.dim))
    return sample_batch(fams, mu_b, var_b, gamma, rng)
