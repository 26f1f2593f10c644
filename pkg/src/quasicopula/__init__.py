"""Quasi-copula distributions for correlated grouped data.

A product of GLM base densities is reweighted by a quadratic form in the
standardized residuals, giving a closed-form joint law with exact
moments, marginal/conditional distributions, a sequential sampler, and
gradient-based maximum likelihood fitting.
"""

from .covariance import (
    AR1Covariance,
    CovarianceSpec,
    CSCovariance,
    VarianceComponents,
    ar1_matrix,
    covariance_from_name,
    cs_matrix,
    cs_rho_bounds,
)
from .errors import (
    DataError,
    DegenerateError,
    DesignError,
    DomainError,
    InitError,
    NestingError,
    NumericError,
    ParameterError,
    QuasiCopulaError,
    TruncationError,
    UnsupportedCovarianceError,
    UnsupportedFamilyError,
)
from .estimator import (
    FitConfig,
    FitResult,
    beta_newton_step,
    beta_score_and_hessian,
    ar1_cs_grad_hess,
    fit,
    full_gradient,
    gaussian_tau_mm_step,
    init_params,
    lrt,
    nb_r_newton_step,
    observed_information_se,
    theta_mm_step,
    vc_grad_hess,
    vc_objective,
    vc_parts,
)
from .families import (
    BaseFamily,
    Bernoulli,
    Beta,
    Binomial,
    Exponential,
    Gamma,
    Gaussian,
    Geometric,
    NegativeBinomial,
    Poisson,
    family_from_name,
)
from .model import (
    ConditionalMoments,
    QuasiCopulaModel,
    SamplingUnit,
    UnitTemplate,
    bivariate_design,
    conditional_density,
    conditional_moments,
    exact_moments,
    logdensity_unit,
    loglikelihood,
    marginal_density,
    standardized_residuals,
)
from .sampler import (
    QuadraticKernelCoeffs,
    conditional_coeffs,
    gaussian_first_coordinate_mixture,
    gaussian_mixture_weights,
    kernel_cdf,
    marginal_coeffs,
    sample_batch,
    sample_continuous_quadratic,
    sample_discrete_quadratic,
    sample_unit,
    sample_units,
)

__version__ = "0.1.0"
