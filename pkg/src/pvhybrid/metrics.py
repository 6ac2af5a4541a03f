"""Forecast scores (RMSE, MAE, R²) and k-fold cross-validation."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputShapeError, PlanError


@dataclass(frozen=True)
class MetricsReport:
    """Scores of one prediction vector.

    ``r2`` is NaN with ``r2_defined=False`` when the truth is constant.
    ``mean_bias`` is the signed mean error (prediction minus truth).
    """

    rmse: float
    mae: float
    r2: float
    n: int
    mean_bias: float = 0.0
    r2_defined: bool = True


def score(y_true, y_pred) -> MetricsReport:
    y = np.asarray(y_true, dtype=np.float64).ravel()
    yhat = np.asarray(y_pred, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise InputShapeError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise InputShapeError("cannot score empty vectors")
    err = yhat - y
    sse = float(np.dot(err, err))
    rmse = math.sqrt(sse / y.size)
    mae = float(np.mean(np.abs(err)))
    dev = y - y.mean()
    # same reduction as sse so the mean predictor scores r2 == 0 exactly
    sst = float(np.dot(dev, dev))
    if sst > 0.0:
        r2, defined = 1.0 - sse / sst, True
    else:
        r2, defined = math.nan, False
    return MetricsReport(rmse, mae, r2, int(y.size), float(np.mean(err)), defined)


class FoldMode(enum.Enum):
    CONTIGUOUS = "contiguous"
    EXPANDING = "expanding"


@dataclass(frozen=True)
class FoldPlan:
    """Index ranges ``[start, end)`` of the evaluation folds.

    Contiguous mode cuts ``n`` rows into ``k`` blocks and trains each fold on
    the other blocks.  Expanding mode cuts ``k + 1`` blocks and evaluates
    blocks ``1..k``, each trained only on the rows that precede it.
    """

    k: int
    mode: FoldMode
    n: int
    folds: tuple

    @classmethod
    def make(cls, n: int, k: int, mode: FoldMode | str = FoldMode.EXPANDING):
        mode = FoldMode(mode)
        if k < 2:
            raise PlanError(f"k must be >= 2, got {k}")
        blocks = k if mode is FoldMode.CONTIGUOUS else k + 1
        if blocks > n:
            raise PlanError(f"{blocks} blocks need at least {blocks} rows, got {n}")
        edges = [(i * n) // blocks for i in range(blocks + 1)]
        ranges = [(edges[i], edges[i + 1]) for i in range(blocks)]
        if mode is FoldMode.EXPANDING:
            ranges = ranges[1:]
        for start, end in ranges:
            if end - start < 1:
                raise PlanError(f"fold [{start}, {end}) is empty")
        return cls(k, mode, n, tuple(ranges))

    def train_indices(self, fold: int) -> np.ndarray:
        start, end = self.folds[fold]
        if self.mode is FoldMode.EXPANDING:
            return np.arange(0, start)
        return np.concatenate([np.arange(0, start), np.arange(end, self.n)])


Trainer = Callable[[np.ndarray, np.ndarray], Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class CvReport:
    plan: FoldPlan
    folds: tuple  # of MetricsReport
    mean_rmse: float
    std_rmse: float
    mean_mae: float
    std_mae: float
    mean_r2: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "start", "end", "rmse", "mae", "r2"])
        for i, ((start, end), m) in enumerate(zip(self.plan.folds, self.folds)):
            w.writerow([i, start, end, repr(m.rmse), repr(m.mae), repr(m.r2)])
        return buf.getvalue()


def k_fold_cv(plan: FoldPlan, trainer: Trainer, X, y, n_jobs: int = 1) -> CvReport:
    """Score ``trainer`` on every fold of ``plan``.

    ``trainer(X_train, y_train)`` must return a predict function.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0] or X.shape[0] != plan.n:
        raise PlanError(f"plan is for {plan.n} rows, data has {X.shape[0]}/{y.shape[0]}")

    def run(i):
        start, end = plan.folds[i]
        tr = plan.train_indices(i)
        predict = trainer(X[tr], y[tr])
        return score(y[start:end], predict(X[start:end]))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            reports = list(pool.map(run, range(len(plan.folds))))
    else:
        reports = [run(i) for i in range(len(plan.folds))]
    rmse = np.array([r.rmse for r in reports])
    mae = np.array([r.mae for r in reports])
    r2 = np.array([r.r2 for r in reports])
    return CvReport(
        plan,
        tuple(reports),
        float(rmse.mean()),
        float(rmse.std()),
        float(mae.mean()),
        float(mae.std()),
        float(np.nanmean(r2)) if np.isfinite(r2).any() else math.nan,
    )


def improvement(baseline: float, candidate: float) -> float:
    """Signed relative improvement in percent; NaN when the baseline is zero."""
    if baseline == 0.0:
        return math.nan
    return 100.0 * (baseline - candidate) / baseline

