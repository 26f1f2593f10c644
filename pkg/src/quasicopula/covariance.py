"""Parameterized covariance structures for the quadratic perturbation.

Three shapes are supported: variance components (VC), first-order
autoregressive (AR1) and compound symmetric (CS). Materialization and
trace terms are cheap closed forms; eigenvalue checks run only at
construction/validation, never inside the likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError, UnsupportedCovarianceError

# quasi-Newton line searches must stay strictly inside the open rho bounds
RHO_MARGIN = 1e-6
_PSD_TOL = 1e-10


def cs_rho_bounds(d: int) -> tuple[float, float]:
    """Open admissible interval for the CS correlation at unit size d."""
    if d < 2:
        raise ParameterError("CS correlation bound requires unit size d >= 2")
    return -1.0 / (d - 1), 1.0


def ar1_matrix(sigma2: float, rho: float, d: int) -> np.ndarray:
    """Raw AR(1) matrix sigma2 * rho^|j-l| without admissibility checks."""
    lags = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    return sigma2 * rho**lags


def cs_matrix(sigma2: float, rho: float, d: int) -> np.ndarray:
    """Raw CS matrix sigma2 * [rho 11^t + (1-rho) I] without checks."""
    return sigma2 * (rho * np.ones((d, d)) + (1.0 - rho) * np.eye(d))


def _check_psd(mat: np.ndarray, what: str, tol: float = _PSD_TOL) -> None:
    sym_gap = np.max(np.abs(mat - mat.T)) if mat.size else 0.0
    if sym_gap > 1e-8:
        raise ParameterError(f"{what} must be symmetric")
    if mat.size and np.linalg.eigvalsh(mat).min() < -tol:
        raise ParameterError(f"{what} must be positive semidefinite")


class CovarianceSpec:
    """Base class for parameterized per-unit covariance matrices."""

    kind: str = "base"

    def materialize(self, d: int, unit_index: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def trace_term(self, d: int, unit_index: int | None = None) -> float:
        """Half trace of the materialized matrix."""
        return 0.5 * float(np.trace(self.materialize(d, unit_index)))

    def rho_derivatives(self, d: int):
        raise UnsupportedCovarianceError(f"{self.kind} has no correlation parameter")

    # -- flattened parameter access for optimizers ---------------------
    def param_names(self) -> list[str]:
        raise NotImplementedError

    def param_vector(self) -> np.ndarray:
        raise NotImplementedError

    def with_params(self, vec) -> "CovarianceSpec":
        raise NotImplementedError

    def param_bounds(self, d_max: int) -> list[tuple[float, float | None]]:
        raise NotImplementedError


@dataclass(frozen=True)
class VarianceComponents(CovarianceSpec):
    """Gamma_i = sum_k theta_k Omega_ik with known symmetric PSD Omega.

    Omega matrices come either from structural builders (callables of the
    unit size d, shared by all units) or from an explicit per-unit list of
    lists, associated with units positionally.
    """

    theta: np.ndarray
    builders: tuple = ()
    per_unit: tuple = ()
    validate: bool = field(default=True, repr=False)

    kind = "vc"

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta", theta)
        if np.any(theta < 0):
            raise ParameterError("variance components must be nonnegative")
        if bool(self.builders) == bool(self.per_unit):
            raise ParameterError("provide either Omega builders or a per-unit list")
        if self.per_unit:
            per_unit = tuple(
                tuple(np.asarray(om, dtype=float) for om in oms) for oms in self.per_unit
            )
            object.__setattr__(self, "per_unit", per_unit)
            for oms in per_unit:
                if len(oms) != self.n_components:
                    raise ParameterError("each unit needs one Omega per component")
                if self.validate:
                    for om in oms:
                        _check_psd(om, "Omega")

    @property
    def n_components(self) -> int:
        return self.theta.size

    @classmethod
    def random_intercept(cls, theta0: float = 1.0) -> "VarianceComponents":
        """Single component with Omega_i = 11^t (random-intercept structure)."""
        return cls(theta=np.array([theta0]), builders=(lambda d: np.ones((d, d)),))

    @classmethod
    def identity(cls, theta0: float = 1.0) -> "VarianceComponents":
        """Single component with Omega_i = I (pure overdispersion)."""
        return cls(theta=np.array([theta0]), builders=(np.eye,))

    @classmethod
    def zero(cls) -> "VarianceComponents":
        """Structurally zero perturbation: the independence model."""
        return cls(theta=np.array([0.0]), builders=(lambda d: np.zeros((d, d)),))

    def omegas(self, d: int, unit_index: int | None = None) -> np.ndarray:
        """Stack of component matrices, shape (m, d, d)."""
        if self.builders:
            return np.stack([np.asarray(b(d), dtype=float) for b in self.builders])
        if unit_index is None:
            raise ParameterError("per-unit VC requires a unit index")
        oms = self.per_unit[unit_index]
        if any(om.shape != (d, d) for om in oms):
            raise ParameterError(f"Omega dimensions inconsistent with d={d}")
        return np.stack(oms)

    def materialize(self, d: int, unit_index: int | None = None) -> np.ndarray:
        return np.tensordot(self.theta, self.omegas(d, unit_index), axes=1)

    def trace_term(self, d: int, unit_index: int | None = None) -> float:
        oms = self.omegas(d, unit_index)
        return 0.5 * float(self.theta @ np.trace(oms, axis1=1, axis2=2))

    def param_names(self):
        return [f"theta{k + 1}" for k in range(self.n_components)]

    def param_vector(self):
        return self.theta.copy()

    def with_params(self, vec):
        return replace(self, theta=np.asarray(vec, dtype=float), validate=False)

    def param_bounds(self, d_max):
        return [(0.0, None)] * self.n_components


def _check_rho(rho: float, lo: float, hi: float, kind: str) -> None:
    if not lo < rho < hi:
        raise ParameterError(f"{kind} correlation must lie in ({lo:g}, {hi:g})")


@dataclass(frozen=True)
class AR1Covariance(CovarianceSpec):
    """Gamma_i = sigma2 * V(rho) with V_jl = rho^|j-l|."""

    sigma2: float
    rho: float

    kind = "ar1"

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ParameterError("AR1 total variance must be nonnegative")
        _check_rho(self.rho, -1.0, 1.0, "AR1")

    def materialize(self, d, unit_index=None):
        return ar1_matrix(self.sigma2, self.rho, d)

    def trace_term(self, d, unit_index=None):
        return 0.5 * d * self.sigma2

    def rho_derivatives(self, d):
        """Element-wise (dV/drho, d2V/drho2) of the correlation part."""
        lags = np.abs(np.subtract.outer(np.arange(d), np.arange(d))).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = np.where(lags >= 1, lags * self.rho ** np.maximum(lags - 1, 0), 0.0)
            d2 = np.where(
                lags >= 2, lags * (lags - 1) * self.rho ** np.maximum(lags - 2, 0), 0.0
            )
        return d1, d2

    def param_names(self):
        return ["sigma2", "rho"]

    def param_vector(self):
        return np.array([self.sigma2, self.rho])

    def with_params(self, vec):
        return replace(self, sigma2=float(vec[0]), rho=float(vec[1]))

    def param_bounds(self, d_max):
        return [(0.0, None), (-1.0 + RHO_MARGIN, 1.0 - RHO_MARGIN)]


@dataclass(frozen=True)
class CSCovariance(CovarianceSpec):
    """Gamma_i = sigma2 * [rho 11^t + (1-rho) I] (equicorrelated).

    The rho lower bound tightens with the unit size; it is enforced at
    materialization, where d is known, against -1/(d-1).
    """

    sigma2: float
    rho: float

    kind = "cs"

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ParameterError("CS total variance must be nonnegative")
        _check_rho(self.rho, -1.0, 1.0, "CS")

    def materialize(self, d, unit_index=None):
        if d >= 2:
            lo, hi = cs_rho_bounds(d)
            _check_rho(self.rho, lo, hi, f"CS (d={d})")
        return cs_matrix(self.sigma2, self.rho, d)

    def trace_term(self, d, unit_index=None):
        return 0.5 * d * self.sigma2

    def rho_derivatives(self, d):
        ones = np.ones((d, d)) - np.eye(d)
        return ones, np.zeros((d, d))

    def param_names(self):
        return ["sigma2", "rho"]

    def param_vector(self):
        return np.array([self.sigma2, self.rho])

    def with_params(self, vec):
        return replace(self, sigma2=float(vec[0]), rho=float(vec[1]))

    def param_bounds(self, d_max):
        lo, hi = cs_rho_bounds(max(d_max, 2))
        return [(0.0, None), (lo + RHO_MARGIN, hi - RHO_MARGIN)]


def covariance_from_name(name: str, **params) -> CovarianceSpec:
    """Build a covariance spec from its config/CLI name string."""
    key = name.strip().lower()
    if key == "vc":
        theta = params.get("theta", 1.0)
        if params.get("random_intercept", True):
            return VarianceComponents.random_intercept(float(np.atleast_1d(theta)[0]))
        return VarianceComponents.identity(float(np.atleast_1d(theta)[0]))
    if key == "ar1":
        return AR1Covariance(sigma2=params.get("sigma2", 1.0), rho=params.get("rho", 0.0))
    if key == "cs":
        return CSCovariance(sigma2=params.get("sigma2", 1.0), rho=params.get("rho", 0.0))
    raise ParameterError(f"unknown covariance kind {name!r}; expected vc, ar1 or cs")
