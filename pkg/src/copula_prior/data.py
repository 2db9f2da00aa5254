"""Datasets, CSV ingestion and standardisation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateFeatureError, LabelDomainError, ParseError

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    names: list[str] = field(default_factory=list)
    target: str = "y"
    task: str = REGRESSION

    def __post_init__(self):
        # one memory layout everywhere, so BLAS reductions (and hence fits)
        # do not depend on how the array was produced
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64).reshape(-1)
        if self.X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError(f"{self.X.shape[0]} feature rows but {self.y.shape[0]} responses")
        if not self.names:
            self.names = [f"x{j + 1}" for j in range(self.X.shape[1])]
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION:
            check_labels(self.y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, rows):
        return Dataset(self.X[rows], self.y[rows], list(self.names), self.target, self.task)


def check_labels(y):
    bad = np.flatnonzero((y != 0.0) & (y != 1.0))
    if bad.size:
        i = int(bad[0])
        raise LabelDomainError(f"classification labels must be 0 or 1; row {i + 1} has {y[i]!r}")


@dataclass(frozen=True, eq=False)
class StandardizationRecord:
    """Column means/scales (population convention) and the response mean."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    task: str = REGRESSION

    def transform(self, data):
        X = (data.X - self.x_mean) / self.x_scale
        y = data.y - self.y_mean if self.task == REGRESSION else data.y.copy()
        return Dataset(X, y, list(data.names), data.target, data.task)

    def transform_X(self, X):
        return (np.asarray(X, dtype=np.float64) - self.x_mean) / self.x_scale

    def coef_to_original(self, omega, intercept=0.0):
        """Back-transform standardised coefficients to the raw feature scale."""
        coef = np.asarray(omega, dtype=np.float64) / self.x_scale
        b0 = self.y_mean + intercept - float(self.x_mean @ coef)
        return coef, b0

    def to_dict(self):
        return {"x_mean": self.x_mean.tolist(), "x_scale": self.x_scale.tolist(),
                "y_mean": self.y_mean, "task": self.task}


def standardize(data):
    """Centre and scale each feature to mean 0 / variance 1 (divide-by-n).

    For regression the response is centred as well.  Returns the standardised
    dataset and the record needed to map coefficients and predictions back.
    """
    mean = data.X.mean(axis=0)
    scale = data.X.std(axis=0)
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        name = data.names[int(bad[0])]
        raise DegenerateFeatureError(f"feature {name!r} is constant", column=name)
    y_mean = float(data.y.mean()) if data.task == REGRESSION else 0.0
    rec = StandardizationRecord(mean, scale, y_mean, data.task)
    return rec.transform(data), rec


def load_csv(path, target, task=REGRESSION, features=None):
    """Read a headed numeric CSV into a :class:`Dataset`.

    Rows are numbered from 1 (the first line after the header) in error
    messages.  ``features`` optionally restricts and orders the feature columns.
    """
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if target not in header:
            raise DataError(f"{path}: target column {target!r} not found in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}",
                                 row=lineno)
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: non-numeric value {cell!r} at row {lineno}, column {name!r}",
                                     row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: non-finite value {cell!r} at row {lineno}, column {name!r}",
                                     row=lineno, column=name)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    t = header.index(target)
    if features is None:
        cols = [j for j in range(len(header)) if j != t]
    else:
        missing = [f for f in features if f not in header]
        if missing:
            raise DataError(f"{path}: feature columns {missing} not found")
        cols = [header.index(f) for f in features]
    return Dataset(arr[:, cols], arr[:, t], [header[j] for j in cols], target, task)


def write_csv(data, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(data.names) + [data.target])
        for xi, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
