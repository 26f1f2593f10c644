"""Long-format CSV ingestion and emission.

The long format is one observation per row: a group id column, one
response column (optionally two for the bivariate mixed-outcome mode),
and numeric covariate columns. Rows with missing or non-numeric fields
are rejected with their line number; groups keep first-appearance order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .model import SamplingUnit, bivariate_design


@dataclass(frozen=True)
class DatasetSchema:
    group_col: str = "id"
    response_col: str = "y"
    second_response_col: str | None = None
    add_intercept: bool = True


def _parse_cell(raw, col, line_no):
    raw = raw.strip()
    if raw == "":
        raise DataError(f"row {line_no}: missing value in column {col!r}")
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"row {line_no}: non-numeric value {raw!r} in column {col!r}")


def load_dataset(path, families, schema: DatasetSchema | None = None):
    """Read a long-format CSV into sampling units.

    ``families`` is a single family (replicated over coordinates) or, in
    bivariate mode, the (first, second) outcome families. Returns
    (units, covariate_names).
    """
    schema = schema or DatasetSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        required = [schema.group_col, schema.response_col]
        if schema.second_response_col:
            required.append(schema.second_response_col)
        for col in required:
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}")
        col_idx = {h: k for k, h in enumerate(header)}
        covariate_names = [h for h in header if h not in required]

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {line_no}: expected {len(header)} fields, found {len(row)}"
                )
            gid = row[col_idx[schema.group_col]].strip()
            y = _parse_cell(row[col_idx[schema.response_col]], schema.response_col, line_no)
            y2 = (
                _parse_cell(
                    row[col_idx[schema.second_response_col]],
                    schema.second_response_col,
                    line_no,
                )
                if schema.second_response_col
                else None
            )
            x = [_parse_cell(row[col_idx[c]], c, line_no) for c in covariate_names]
            rows.append((gid, y, y2, x))

    if not rows:
        raise DataError(f"{path}: no data rows")

    if schema.second_response_col:
        fam_pair = tuple(families)
        if len(fam_pair) != 2:
            raise ParameterError("bivariate mode needs exactly two families")
        units = []
        for gid, y, y2, x in rows:
            covs = ([1.0] + x) if schema.add_intercept else x
            X = bivariate_design(np.asarray(covs))
            units.append(SamplingUnit(X=X, families=fam_pair, y=np.array([y, y2])))
        return units, covariate_names

    family = families if not isinstance(families, (tuple, list)) else families[0]
    groups: dict = {}
    order = []
    for gid, y, _, x in rows:
        if gid not in groups:
            groups[gid] = []
            order.append(gid)
        groups[gid].append((y, x))

    units = []
    for gid in order:
        ys = np.array([r[0] for r in groups[gid]])
        X = np.array([r[1] for r in groups[gid]], dtype=float)
        if schema.add_intercept:
            X = np.column_stack([np.ones(len(ys)), X]) if X.size else np.ones((len(ys), 1))
        units.append(SamplingUnit(X=X, families=(family,) * len(ys), y=ys))
    return units, covariate_names


def write_long_csv(path, units, schema: DatasetSchema | None = None, group_ids=None):
    """Emit units in the long format that ``load_dataset`` reads back.

    When the schema adds an intercept on load, the leading design column
    is assumed to be that intercept and is not written.
    """
    schema = schema or DatasetSchema()
    skip = 1 if schema.add_intercept else 0
    p = units[0].n_covariates - skip
    names = [f"x{j + 1}" for j in range(p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema.group_col, schema.response_col] + names)
        for i, u in enumerate(units):
            gid = group_ids[i] if group_ids is not None else f"g{i + 1}"
            for j in range(u.dim):
                writer.writerow(
                    [gid, repr(float(u.y[j]))] + [repr(float(v)) for v in u.X[j, skip:]]
                )


def write_bivariate_csv(path, units, schema: DatasetSchema):
    """Emit bivariate mixed-outcome units (one unit per row)."""
    if not schema.second_response_col:
        raise ParameterError("bivariate writer needs schema.second_response_col")
    skip = 1 if schema.add_intercept else 0
    half = units[0].n_covariates // 2
    names = [f"x{j + 1}" for j in range(half - skip)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [schema.group_col, schema.response_col, schema.second_response_col] + names
        )
        for i, u in enumerate(units):
            x = u.X[0, skip:half]
            writer.writerow(
                [f"g{i + 1}", repr(float(u.y[0])), repr(float(u.y[1]))]
                + [repr(float(v)) for v in x]
            )
