"""Command line interface: fit, sample, and simulate subcommands.

Exit status is 0 on success and 2 when any requested fit failed to
converge (outputs are still written in that case).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import report as report_mod
from .covariance import covariance_from_name
from .data import DatasetSchema, load_dataset, write_long_csv
from .errors import ParameterError, QuasiCopulaError
from .estimator import FitConfig, fit
from .families import family_from_name
from .model import QuasiCopulaModel, SamplingUnit
from .sampler import sample_batch
from .simulate import SimStudyConfig, run_sim_study

_CANONICAL_LINKS = {
    "gaussian": "identity",
    "poisson": "log",
    "bernoulli": "logit",
    "negbin": "log",
}


def _parse_kv_params(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise ParameterError(f"family parameter {item!r} must look like key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = float(value)
    return out


def _parse_floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="quasicopula",
        description="Quasi-copula models: fitting, sampling and simulation studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="maximum likelihood fit from a CSV dataset")
    p_fit.add_argument("--data", required=True, help="long-format CSV path")
    p_fit.add_argument("--family", required=True)
    p_fit.add_argument("--covariance", required=True, choices=["vc", "ar1", "cs"])
    p_fit.add_argument("--link", default=None, choices=["identity", "log", "logit"],
                       help="must match the family's canonical link")
    p_fit.add_argument("--group-col", default="id")
    p_fit.add_argument("--response-col", default="y")
    p_fit.add_argument("--second-response-col", default=None)
    p_fit.add_argument("--second-family", default=None)
    p_fit.add_argument("--no-intercept", action="store_true")
    p_fit.add_argument("--family-params", default="", help="e.g. r=10 or tau=1")
    p_fit.add_argument("--tol", type=float, default=1e-6)
    p_fit.add_argument("--max-iters", type=int, default=10,
                       help="block iterations (and quasi-Newton rounds)")
    se_group = p_fit.add_mutually_exclusive_group()
    se_group.add_argument("--se", dest="se", action="store_true", default=True)
    se_group.add_argument("--no-se", dest="se", action="store_false")
    p_fit.add_argument("--out", default=None, help="output directory")

    p_sample = sub.add_parser("sample", help="draw vectors from the joint law")
    p_sample.add_argument("--family", required=True)
    p_sample.add_argument("--covariance", required=True, choices=["vc", "ar1", "cs"])
    p_sample.add_argument("--n", type=int, required=True)
    p_sample.add_argument("--d", type=int, required=True)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--beta", default="0.1",
                          help="comma list; design is intercept + standard normals")
    p_sample.add_argument("--theta", type=float, default=0.1)
    p_sample.add_argument("--sigma2", type=float, default=0.5)
    p_sample.add_argument("--rho", type=float, default=0.0)
    p_sample.add_argument("--family-params", default="")
    p_sample.add_argument("--out", required=True, help="CSV path")

    p_sim = sub.add_parser("simulate", help="run a seeded simulation study")
    p_sim.add_argument("--config", required=True, help="flat key=value text file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--no-figures", action="store_true")
    return parser


def _check_link(family_name, link):
    canonical = _CANONICAL_LINKS.get(family_name)
    if link is not None and canonical is not None and link != canonical:
        raise ParameterError(
            f"{family_name} supports only its canonical {canonical} link"
        )


def _cmd_fit(args):
    fam = family_from_name(args.family, **_parse_kv_params(args.family_params))
    _check_link(args.family, args.link)
    schema = DatasetSchema(
        group_col=args.group_col,
        response_col=args.response_col,
        second_response_col=args.second_response_col,
        add_intercept=not args.no_intercept,
    )
    if args.second_response_col:
        fam2 = family_from_name(args.second_family or args.family)
        units, _ = load_dataset(args.data, (fam, fam2), schema)
    else:
        units, _ = load_dataset(args.data, fam, schema)
    covariance = covariance_from_name(args.covariance)
    config = FitConfig(
        tol=args.tol, max_block_iters=args.max_iters, max_qn_iters=15
    )
    result = fit(units, covariance, config, compute_se=args.se)

    print(result.summary())
    for msg in result.messages:
        print(f"note: {msg}", file=sys.stderr)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "estimates.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "estimate", "se"])
            for k, name in enumerate(result.param_names):
                se = (
                    result.standard_errors[k]
                    if result.standard_errors is not None
                    else ""
                )
                writer.writerow([name, repr(float(result.params[k])), se])
            writer.writerow(["loglikelihood", repr(result.loglikelihood), ""])
        with open(os.path.join(args.out, "summary.txt"), "w") as fh:
            fh.write(result.summary() + "\n")
    return 0 if result.converged else 2


def _cmd_sample(args):
    params = _parse_kv_params(args.family_params)
    fam = family_from_name(args.family, **params)
    covariance = covariance_from_name(
        args.covariance, theta=args.theta, sigma2=args.sigma2, rho=args.rho
    )
    beta = np.asarray(_parse_floats(args.beta))
    rng = np.random.default_rng(args.seed)
    X = rng.standard_normal((args.n, args.d, beta.size))
    X[:, :, 0] = 1.0
    model = QuasiCopulaModel(beta=beta, covariance=covariance)
    fam_eff = model.effective_family(fam)
    if fam_eff.fixed_mean() is None:
        eta = X @ beta
        mu = fam_eff.mean_from_eta(eta)
    else:
        mu = np.full((args.n, args.d), fam_eff.fixed_mean())
    var = fam_eff.variance_from_mean(mu)
    gamma = covariance.materialize(args.d)
    Y = sample_batch((fam_eff,) * args.d, mu, var, gamma, rng)
    units = [
        SamplingUnit(X=X[i], families=(fam_eff,) * args.d, y=Y[i])
        for i in range(args.n)
    ]
    write_long_csv(args.out, units)
    print(f"wrote {args.n} units of size {args.d} to {args.out}")
    return 0


def _load_sim_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{line_no}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value

    def get_list(key, cast, default):
        if key not in values:
            return default
        return tuple(cast(v) for v in values[key].split(",") if v.strip())

    fit_config = FitConfig(
        tol=float(values.get("tol", 1e-6)),
        max_block_iters=int(values.get("max_block_iters", 10)),
        max_qn_iters=int(values.get("max_qn_iters", 15)),
    )
    return SimStudyConfig(
        scenario=values.get("scenario", "I"),
        family=values.get("family", "poisson"),
        covariance=values.get("covariance", "vc"),
        n_values=get_list("n", int, (100, 1000)),
        d_values=get_list("d", int, (2,)),
        theta=float(values.get("theta", 0.1)),
        sigma2=float(values.get("sigma2", 0.5)),
        rho=float(values.get("rho", 0.5)),
        nb_r=float(values.get("nb_r", 10.0)),
        tau=float(values.get("tau", 100.0)),
        n_covariates=int(values.get("covariates", 3)),
        beta_range=float(values.get("beta_range", 0.2)),
        beta_true=get_list("beta", float, None),
        replicates=int(values.get("replicates", 20)),
        seed=int(values.get("seed", 0)),
        fit_config=fit_config,
    )


def _cmd_simulate(args):
    config = _load_sim_config(args.config)
    study = run_sim_study(config)
    paths = report_mod.report(study, args.out, figures=not args.no_figures)
    for p in paths:
        print(f"wrote {p}")
    return 2 if study.any_failed else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "sample":
            return _cmd_sample(args)
        return _cmd_simulate(args)
    except QuasiCopulaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
