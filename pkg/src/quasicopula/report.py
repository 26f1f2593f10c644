"""Study report emission: machine CSVs, a markdown summary, and figures.

The MSE/time table mirrors the (n, d, time, se-of-time) layout used for
benchmark reporting; the estimate table carries parameter, truth, fit
and a 95% confidence interval. Figures render the MSE trends against
sample size on log-log axes next to the delimited output.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import ParameterError

MSE_COLUMNS = [
    "n",
    "d",
    "replicates",
    "fitted",
    "mse_beta",
    "mse_theta",
    "mean_time_s",
    "se_time_s",
    "convergence_rate",
]

ESTIMATE_COLUMNS = [
    "n",
    "d",
    "replicate",
    "parameter",
    "truth",
    "estimate",
    "se",
    "ci_lower",
    "ci_upper",
    "converged",
]


def write_mse_csv(rows, path):
    if not rows:
        raise ParameterError("no study rows to report")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MSE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in MSE_COLUMNS})


def estimate_records(outcomes):
    records = []
    for rep in outcomes:
        for name, truth in rep.truth.items():
            est = rep.estimates.get(name)
            if est is None:
                continue
            se = rep.standard_errors.get(name)
            lo = est - 1.96 * se if se is not None and np.isfinite(se) else ""
            hi = est + 1.96 * se if se is not None and np.isfinite(se) else ""
            records.append(
                {
                    "n": rep.n,
                    "d": rep.d,
                    "replicate": rep.replicate,
                    "parameter": name,
                    "truth": truth,
                    "estimate": est,
                    "se": se if se is not None else "",
                    "ci_lower": lo,
                    "ci_upper": hi,
                    "converged": rep.converged,
                }
            )
    return records


def write_estimates_csv(outcomes, path):
    records = estimate_records(outcomes)
    if not records:
        raise ParameterError("no estimates to report")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=ESTIMATE_COLUMNS)
        writer.writeheader()
        writer.writerows(records)


def _md_table(header, rows):
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(out)


def write_report_md(study, path):
    """Human-readable summary: run-time table plus estimate tables."""
    if not study.rows:
        raise ParameterError("no study rows to report")
    cfg = study.config
    lines = [
        "# Simulation study report",
        "",
        f"- scenario: {cfg.scenario}",
        f"- family: {cfg.family}, covariance: {cfg.covariance}",
        f"- replicates: {cfg.replicates}, seed: {cfg.seed}",
        "",
        "## Fit accuracy and run times",
        "",
        _md_table(
            ["n", "d", "MSE(beta)", "MSE(theta)", "time (s)", "SE time", "converged"],
            [
                [
                    r["n"],
                    r["d"],
                    f"{r['mse_beta']:.3e}",
                    f"{r['mse_theta']:.3e}",
                    f"{r['mean_time_s']:.3f}",
                    f"{r['se_time_s']:.3f}",
                    f"{r['convergence_rate']:.0%}",
                ]
                for r in study.rows
            ],
        ),
        "",
        "Run times cover fitting only, not data generation.",
        "",
    ]
    for r in study.rows:
        reps = [
            o
            for o in study.replicates
            if o.n == r["n"] and o.d == r["d"] and o.estimates
        ]
        if not reps:
            continue
        names = list(reps[0].truth.keys())
        table = []
        for name in names:
            ests = [o.estimates[name] for o in reps if name in o.estimates]
            ses = [
                o.standard_errors[name]
                for o in reps
                if name in o.standard_errors and np.isfinite(o.standard_errors[name])
            ]
            mean_est = float(np.mean(ests)) if ests else float("nan")
            if ses:
                half = 1.96 * float(np.mean(ses))
                ci = f"({mean_est - half:.3f}, {mean_est + half:.3f})"
            else:
                ci = "(NA, NA)"
            table.append([name, f"{reps[0].truth[name]:.4g}", f"{mean_est:.4f}", ci])
        lines += [
            f"## Estimates at n={r['n']}, d={r['d']}",
            "",
            _md_table(["Parameter", "Truth", "Fit", "95% CI"], table),
            "",
        ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def render_mse_figures(rows, out_dir, prefix="mse"):
    """Log-log MSE-versus-n trend figures, one per target quantity."""
    if not rows:
        raise ParameterError("no study rows to plot")
    written = []
    for key, label in (("mse_beta", "MSE of beta"), ("mse_theta", "MSE of covariance")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for d in sorted({r["d"] for r in rows}):
            pts = sorted(
                [(r["n"], r[key]) for r in rows if r["d"] == d and np.isfinite(r[key])]
            )
            if pts:
                ax.loglog(*zip(*pts), marker="o", label=f"d={d}")
        ax.set_xlabel("sample size n")
        ax.set_ylabel(label)
        ax.legend(frameon=False)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{prefix}_{key.split('_')[1]}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def report(study, out_dir, figures=True):
    """Write mse.csv, estimates.csv, report.md (and figures) to out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    write_mse_csv(study.rows, os.path.join(out_dir, "mse.csv"))
    write_estimates_csv(study.replicates, os.path.join(out_dir, "estimates.csv"))
    write_report_md(study, os.path.join(out_dir, "report.md"))
    paths = [
        os.path.join(out_dir, "mse.csv"),
        os.path.join(out_dir, "estimates.csv"),
        os.path.join(out_dir, "report.md"),
    ]
    if figures:
        paths += render_mse_figures(study.rows, out_dir)
    return paths
