"""CSV readers and writers for the data formats the pipelines exchange.

All tables are RFC-4180 CSV with a header row. Floats are written with
``repr`` so values round-trip exactly.
"""

from __future__ import annotations

import csv

import numpy as np

from .fairness import FairDataset
from .portfolio import ReturnMatrix
from .survey import SurveySample


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_table(path, header, rows):
    """Write a list of row tuples under a header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_table(path):
    """Read a CSV table back as (header, list of string rows)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    return header, rows


def write_survey_csv(path, sample):
    x = np.atleast_2d(np.asarray(sample.x, dtype=float).T).T
    d = x.shape[1]
    header = [f"x{k + 1}" for k in range(d)] + ["pi"]
    rows = [tuple(x[i]) + (sample.pi[i],) for i in range(x.shape[0])]
    write_table(path, header, rows)


def read_survey_csv(path):
    header, rows = read_table(path)
    if not header or header[-1] != "pi" or header[:-1] != [f"x{k + 1}" for k in range(len(header) - 1)]:
        raise ValueError(f"expected header x1,...,xd,pi in {path}")
    data = np.array([[float(v) for v in row] for row in rows])
    x = data[:, :-1]
    if x.shape[1] == 1:
        x = x[:, 0]
    return SurveySample(x=x, pi=data[:, -1])


def write_fair_csv(path, dataset):
    p = dataset.x.shape[1]
    header = ["y", "a"] + [f"x{k + 1}" for k in range(p)]
    rows = [
        (dataset.y[i], dataset.groups[i]) + tuple(dataset.x[i])
        for i in range(dataset.x.shape[0])
    ]
    write_table(path, header, rows)


def read_fair_csv(path):
    header, rows = read_table(path)
    p = len(header) - 2
    if header[:2] != ["y", "a"] or header[2:] != [f"x{k + 1}" for k in range(p)]:
        raise ValueError(f"expected header y,a,x1,...,xp in {path}")
    y = np.array([float(row[0]) for row in rows])
    groups = np.array([row[1] for row in rows])
    x = np.array([[float(v) for v in row[2:]] for row in rows])
    return FairDataset(x, y, groups)


def write_returns_csv(path, returns):
    header = ["period"] + list(returns.labels)
    rows = [(i + 1,) + tuple(returns.values[i]) for i in range(returns.n_periods)]
    write_table(path, header, rows)


def read_returns_csv(path):
    header, rows = read_table(path)
    if not header or header[0] != "period" or len(header) < 2:
        raise ValueError(f"expected header period,asset1,...,assetd in {path}")
    values = np.array([[float(v) for v in row[1:]] for row in rows])
    return ReturnMatrix(values=values, labels=tuple(header[1:]))
