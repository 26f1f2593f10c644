"""Simulation-study harness: data generators and the MSE study runner.

Scenario I draws responses from the quasi-copula law itself; scenario II
draws them from a random-intercept GLMM so the model is deliberately
misspecified. Replicates get independent child seeds, so adding
replicates never changes earlier ones.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import sampler
from .covariance import CovarianceSpec, VarianceComponents, covariance_from_name
from .errors import ParameterError
from .estimator import FitConfig, fit
from .families import BaseFamily, family_from_name
from .model import QuasiCopulaModel, SamplingUnit


@dataclass(frozen=True)
class SimStudyConfig:
    """Desk-scale study configuration.

    beta_true, when omitted, is drawn once per study from
    Uniform(-beta_range, beta_range).
    """

    scenario: str = "I"
    family: str = "poisson"
    covariance: str = "vc"
    n_values: tuple = (100, 1000)
    d_values: tuple = (2,)
    theta: float = 0.1
    sigma2: float = 0.5
    rho: float = 0.5
    nb_r: float = 10.0
    tau: float = 100.0
    n_covariates: int = 3
    beta_range: float = 0.2
    beta_true: tuple | None = None
    replicates: int = 20
    seed: int = 0
    fit_config: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.scenario not in ("I", "II"):
            raise ParameterError("scenario must be 'I' or 'II'")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if self.scenario == "II" and self.covariance != "vc":
            raise ParameterError("scenario II generates random-intercept data (vc)")

    def family_object(self) -> BaseFamily:
        return family_from_name(self.family, r=self.nb_r, tau=self.tau)

    def covariance_object(self) -> CovarianceSpec:
        return covariance_from_name(
            self.covariance, theta=self.theta, sigma2=self.sigma2, rho=self.rho
        )


def draw_beta(config: SimStudyConfig, rng) -> np.ndarray:
    if config.beta_true is not None:
        return np.asarray(config.beta_true, dtype=float)
    return rng.uniform(-config.beta_range, config.beta_range, size=config.n_covariates)


def _designs(n, d, p, rng):
    """Intercept plus standard-normal covariate columns, per unit."""
    X = rng.standard_normal((n, d, p))
    X[:, :, 0] = 1.0
    return X


def _units_from_arrays(X, Y, families):
    return [
        SamplingUnit(X=X[i], families=families, y=Y[i]) for i in range(X.shape[0])
    ]


def generate_qc_data(config: SimStudyConfig, n, d, rng, beta=None):
    """Responses drawn from the quasi-copula law (scenario I)."""
    beta = draw_beta(config, rng) if beta is None else np.asarray(beta, dtype=float)
    fam = config.family_object()
    cov = config.covariance_object()
    X = _designs(n, d, beta.size, rng)
    model = QuasiCopulaModel(
        beta=beta,
        covariance=cov,
        tau=config.tau if fam.kind == "gaussian" else None,
        r=config.nb_r if fam.kind == "negbin" else None,
    )
    eta = X @ beta
    fam_eff = model.effective_family(fam)
    mu = fam_eff.mean_from_eta(eta)
    var = fam_eff.variance_from_mean(mu)
    gamma = cov.materialize(d)
    Y = sampler.sample_batch((fam_eff,) * d, mu, var, gamma, rng)
    return _units_from_arrays(X, Y, (fam,) * d), model


def generate_glmm_data(config: SimStudyConfig, n, d, rng, beta=None):
    """Responses from a random-intercept GLMM (scenario II)."""
    beta = draw_beta(config, rng) if beta is None else np.asarray(beta, dtype=float)
    fam = config.family_object()
    X = _designs(n, d, beta.size, rng)
    b = rng.normal(0.0, np.sqrt(config.theta), size=n) if config.theta > 0 else np.zeros(n)
    eta = X @ beta + b[:, None]
    fam_eff = fam if fam.kind != "negbin" else fam.with_dispersion(config.nb_r)
    if fam.kind == "gaussian":
        fam_eff = fam.with_dispersion(config.tau)
    mu = fam_eff.mean_from_eta(eta)
    Y = fam_eff.sample_base(rng, mu).astype(float)
    model = QuasiCopulaModel(
        beta=beta,
        covariance=VarianceComponents.random_intercept(config.theta),
        tau=config.tau if fam.kind == "gaussian" else None,
        r=config.nb_r if fam.kind == "negbin" else None,
    )
    return _units_from_arrays(X, Y, (fam,) * d), model


def generate_bivariate_mixed_data(n, theta, beta1, beta2, rng):
    """Poisson + Bernoulli pairs under a shared covariate vector."""
    from .families import Bernoulli, Poisson

    beta1 = np.asarray(beta1, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)
    p = beta1.size
    fams = (Poisson(), Bernoulli())
    cov = VarianceComponents.random_intercept(theta)
    x = rng.standard_normal((n, p))
    x[:, 0] = 1.0
    X = np.zeros((n, 2, 2 * p))
    X[:, 0, :p] = x
    X[:, 1, p:] = x
    beta = np.concatenate([beta1, beta2])
    eta = X @ beta
    mu = np.column_stack(
        [fams[0].mean_from_eta(eta[:, 0]), fams[1].mean_from_eta(eta[:, 1])]
    )
    var = np.column_stack(
        [fams[0].variance_from_mean(mu[:, 0]), fams[1].variance_from_mean(mu[:, 1])]
    )
    Y = sampler.sample_batch(fams, mu, var, cov.materialize(2), rng)
    model = QuasiCopulaModel(beta=beta, covariance=cov)
    return _units_from_arrays(X, Y, fams), model


@dataclass
class ReplicateOutcome:
    n: int
    d: int
    replicate: int
    fit_seconds: float
    converged: bool
    truth: dict
    estimates: dict
    standard_errors: dict
    error: str | None = None


@dataclass
class StudyResult:
    config: SimStudyConfig
    rows: list            # aggregate per (n, d)
    replicates: list      # ReplicateOutcome, in replicate order

    @property
    def any_failed(self) -> bool:
        return any(r.error is not None or not r.converged for r in self.replicates)


def _truth_dict(model: QuasiCopulaModel, config: SimStudyConfig) -> dict:
    out = {f"beta{j + 1}": float(b) for j, b in enumerate(model.beta)}
    cov = model.covariance
    for name, value in zip(cov.param_names(), cov.param_vector()):
        out[name] = float(value)
    if config.scenario == "II" and cov.kind == "vc":
        out["theta1"] = config.theta
    if model.tau is not None:
        out["tau"] = float(model.tau)
    if model.r is not None:
        out["r"] = float(model.r)
    return out


def run_replicate(config: SimStudyConfig, n, d, index, child_seed, beta_true) -> ReplicateOutcome:
    rng = np.random.default_rng(child_seed)
    generator = generate_qc_data if config.scenario == "I" else generate_glmm_data
    units, truth_model = generator(config, n, d, rng, beta=beta_true)
    truth = _truth_dict(truth_model, config)
    try:
        start = time.perf_counter()
        result = fit(units, config.covariance_object(), config.fit_config)
        elapsed = time.perf_counter() - start
        estimates = dict(zip(result.param_names, result.params))
        ses = (
            dict(zip(result.param_names, result.standard_errors))
            if result.standard_errors is not None
            else {}
        )
        return ReplicateOutcome(
            n=n,
            d=d,
            replicate=index,
            fit_seconds=elapsed,
            converged=result.converged,
            truth=truth,
            estimates=estimates,
            standard_errors=ses,
        )
    except Exception as exc:  # record, never abort the study
        return ReplicateOutcome(
            n=n,
            d=d,
            replicate=index,
            fit_seconds=float("nan"),
            converged=False,
            truth=truth,
            estimates={},
            standard_errors={},
            error=f"{type(exc).__name__}: {exc}",
        )


def _replicate_ok(r: ReplicateOutcome) -> bool:
    return r.error is None and bool(r.estimates)


def run_sim_study(config: SimStudyConfig) -> StudyResult:
    """Run the full (n, d, replicate) grid and aggregate MSE rows.

    The study is a deterministic function of (config, seed): replicate
    seeds come from counter-mode splitting of the study seed, so the
    first k replicates are identical no matter how many follow them.
    """
    root = np.random.default_rng(config.seed)
    beta_true = draw_beta(config, root)

    rows = []
    outcomes = []
    for n in config.n_values:
        for d in config.d_values:
            children = np.random.SeedSequence(
                entropy=config.seed, spawn_key=(int(n), int(d))
            ).spawn(config.replicates)
            reps = [
                run_replicate(config, n, d, i, child, beta_true)
                for i, child in enumerate(children)
            ]
            outcomes.extend(reps)
            ok = [r for r in reps if _replicate_ok(r)]
            mse_beta = np.nan
            mse_cov = np.nan
            if ok:
                beta_names = [k for k in ok[0].truth if k.startswith("beta")]
                cov_names = [
                    k for k in ok[0].truth if k.startswith(("theta", "sigma2", "rho"))
                ]
                mse_beta = float(
                    np.mean(
                        [
                            np.mean(
                                [(r.estimates[k] - r.truth[k]) ** 2 for k in beta_names]
                            )
                            for r in ok
                        ]
                    )
                )
                mse_cov = float(
                    np.mean(
                        [
                            np.mean(
                                [(r.estimates[k] - r.truth[k]) ** 2 for k in cov_names]
                            )
                            for r in ok
                        ]
                    )
                )
            times = np.array([r.fit_seconds for r in ok]) if ok else np.array([np.nan])
            rows.append(
                {
                    "n": n,
                    "d": d,
                    "replicates": len(reps),
                    "fitted": len(ok),
                    "mse_beta": mse_beta,
                    "mse_theta": mse_cov,
                    "mean_time_s": float(np.mean(times)),
                    "se_time_s": float(np.std(times) / np.sqrt(max(len(times), 1))),
                    "convergence_rate": float(np.mean([r.converged for r in reps])),
                }
            )
    return StudyResult(config=config, rows=rows, replicates=outcomes)
