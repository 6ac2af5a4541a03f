"""Feature ranking: elastic-net coefficients and boosted-stump split gain."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputShapeError, PreconditionError

STANDARDIZE_TOL = 1e-6


@dataclass(frozen=True)
class ElasticNetConfig:
    lam: float = 0.01
    alpha: float = 0.5
    max_sweeps: int = 1000
    tol: float = 1e-10

    def __post_init__(self):
        if self.lam < 0 or not 0 <= self.alpha <= 1:
            raise ValueError("need lam >= 0 and alpha in [0, 1]")
        if self.max_sweeps < 1 or not self.tol > 0:
            raise ValueError("max_sweeps and tol must be positive")


@dataclass(frozen=True)
class ElasticNetResult:
    coef: np.ndarray
    converged: bool
    sweeps: int
    objective_trace: tuple  # objective before the first sweep, then after each


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def elastic_net_objective(X, y, beta, cfg: ElasticNetConfig) -> float:
    r = y - X @ beta
    n = y.size
    return float(
        r @ r / (2 * n)
        + cfg.lam * (cfg.alpha * np.abs(beta).sum() + 0.5 * (1 - cfg.alpha) * beta @ beta)
    )


def standardize(X) -> np.ndarray:
    """Zero-mean, unit-(population-)variance columns; constant columns become 0."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    out = np.zeros_like(X)
    ok = sd > 0
    out[:, ok] = (X[:, ok] - mu[ok]) / sd[ok]
    return out


def _check_standardized(X, y) -> None:
    mean = X.mean(axis=0)
    var = (X * X).mean(axis=0)
    zero_col = np.all(X == 0.0, axis=0)
    bad = (np.abs(mean) > STANDARDIZE_TOL) | ((np.abs(var - 1) > STANDARDIZE_TOL) & ~zero_col)
    if bad.any():
        raise PreconditionError(
            f"columns {np.flatnonzero(bad).tolist()} are not standardized (zero mean, unit variance)"
        )
    if abs(float(y.mean())) > STANDARDIZE_TOL * max(1.0, float(np.abs(y).max(initial=0.0))):
        raise PreconditionError("y must be centered")


def elastic_net_fit(X, y, cfg: ElasticNetConfig = ElasticNetConfig()) -> ElasticNetResult:
    """Cyclic coordinate descent with soft-thresholding.

    Minimises ``(1/2n)||y - X b||^2 + lam * (alpha |b|_1 + (1 - alpha)/2 |b|^2)``
    on standardized ``X`` and centered ``y``.  All-zero columns are accepted
    (they come from standardizing a constant feature) and keep a zero
    coefficient.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InputShapeError(f"X shape {X.shape} does not match y length {y.size}")
    _check_standardized(X, y)
    n, p = X.shape
    col_sq = (X * X).sum(axis=0) / n
    beta = np.zeros(p)
    r = y.copy()
    l1 = cfg.lam * cfg.alpha
    l2 = cfg.lam * (1 - cfg.alpha)
    trace = [elastic_net_objective(X, y, beta, cfg)]
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            z = X[:, j] @ r / n + col_sq[j] * old
            new = float(soft_threshold(z, l1)) / (col_sq[j] + l2)
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        trace.append(elastic_net_objective(X, y, beta, cfg))
        if max_change < cfg.tol:
            converged = True
            break
    return ElasticNetResult(beta, converged, sweeps, tuple(trace))


def elastic_net_scores(X, y, lambdas: Sequence[float] = (0.001, 0.01, 0.1), alpha: float = 0.5) -> np.ndarray:
    """|coefficient| on standardized data, averaged over a lambda grid."""
    Xs = standardize(X)
    y = np.asarray(y, dtype=np.float64)
    yc = y - y.mean()
    total = np.zeros(Xs.shape[1])
    for lam in lambdas:
        total += np.abs(elastic_net_fit(Xs, yc, ElasticNetConfig(lam=lam, alpha=alpha)).coef)
    return total / len(lambdas)


# ---------------------------------------------------------------------------
# boosted stumps


@dataclass(frozen=True)
class BoostResult:
    gains: np.ndarray  # per feature, actual reduction in training SSE
    sse_trace: tuple  # training SSE before round 1, then after each round


def _best_split(sorted_vals, sorted_r, n):
    """Best SSE reduction for one feature; returns (gain, threshold, left mean, right mean)."""
    csum = np.cumsum(sorted_r)
    total = csum[-1]
    # split after position i (left = 0..i) only where the value changes
    valid = np.flatnonzero(sorted_vals[1:] != sorted_vals[:-1])
    if valid.size == 0:
        return 0.0, None, 0.0, 0.0
    n_left = valid + 1.0
    s_left = csum[valid]
    s_right = total - s_left
    gain = s_left**2 / n_left + s_right**2 / (n - n_left) - total**2 / n
    k = int(np.argmax(gain))
    i = valid[k]
    thr = 0.5 * (sorted_vals[i] + sorted_vals[i + 1])
    return float(gain[k]), thr, s_left[k] / n_left[k], s_right[k] / (n - n_left[k])


def boosted_stump_importance(X, y, rounds: int = 50, shrinkage: float = 0.1) -> BoostResult:
    """Least-squares gradient boosting with depth-1 trees.

    Each round fits a stump (with a fitted intercept) to the residuals and
    credits the split feature with the SSE reduction the shrunken update
    actually achieves, so the gains sum to the total training-SSE reduction.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InputShapeError(f"X shape {X.shape} does not match y length {y.size}")
    if y.size < 2:
        raise InputShapeError("boosting needs at least 2 rows")
    if rounds < 1 or not 0 < shrinkage <= 1:
        raise ValueError("rounds must be >= 1 and shrinkage in (0, 1]")
    n, p = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    sorted_X = np.take_along_axis(X, order, axis=0)
    pred = np.full(n, y.mean())
    resid = y - pred
    gains = np.zeros(p)
    sse = float(resid @ resid)
    trace = [sse]
    for _ in range(rounds):
        best = (0.0, -1, None, 0.0, 0.0)
        for j in range(p):
            g, thr, lm, rm = _best_split(sorted_X[:, j], resid[order[:, j]], n)
            if thr is not None and g > best[0]:
                best = (g, j, thr, lm, rm)
        g, j, thr, lm, rm = best
        if j < 0 or g <= 0.0:
            trace.append(sse)
            continue
        step = np.where(X[:, j] <= thr, lm, rm)
        resid = resid - shrinkage * step
        new_sse = float(resid @ resid)
        gains[j] += max(sse - new_sse, 0.0)
        sse = new_sse
        trace.append(sse)
    return BoostResult(gains, tuple(trace))


# ---------------------------------------------------------------------------
# ranking


@dataclass(frozen=True)
class FeatureImportance:
    name: str
    elastic_net_score: float
    boost_score: float
    combined: float
    rank: int


@dataclass(frozen=True)
class ImportanceReport:
    features: tuple  # of FeatureImportance, in input order

    def ranked(self) -> list:
        return sorted(self.features, key=lambda f: f.rank)

    def top(self, k: int) -> list:
        return [f.name for f in self.ranked()[:k]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("feature,en_score,boost_score,combined,rank\n")
        for f in self.ranked():
            buf.write(f"{f.name},{f.elastic_net_score!r},{f.boost_score!r},{f.combined!r},{f.rank}\n")
        return buf.getvalue()


def _normalize(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    return v / s if s > 0 else np.zeros_like(v)


def rank_features(en_scores, boost_scores, names: Sequence[str] | None = None) -> ImportanceReport:
    en = np.asarray(en_scores, dtype=np.float64)
    bo = np.asarray(boost_scores, dtype=np.float64)
    if en.shape != bo.shape or en.ndim != 1:
        raise InputShapeError(f"score vectors differ in shape: {en.shape} vs {bo.shape}")
    if names is None:
        names = [f"x{i}" for i in range(en.size)]
    if len(names) != en.size:
        raise InputShapeError("names do not match score length")
    combined = 0.5 * (_normalize(en) + _normalize(bo))
    # stable sort on -combined keeps ties in index order
    order = np.argsort(-combined, kind="stable")
    ranks = np.empty(en.size, dtype=int)
    ranks[order] = np.arange(1, en.size + 1)
    return ImportanceReport(
        tuple(
            FeatureImportance(names[i], float(en[i]), float(bo[i]), float(combined[i]), int(ranks[i]))
            for i in range(en.size)
        )
    )


def importance_report(
    X,
    y,
    names: Sequence[str],
    lambdas: Sequence[float] = (0.001, 0.01, 0.1),
    alpha: float = 0.5,
    rounds: int = 50,
    shrinkage: float = 0.1,
) -> ImportanceReport:
    """Both selectors on raw ``X``/``y`` followed by :func:`rank_features`."""
    en = elastic_net_scores(X, y, lambdas, alpha)
    boost = boosted_stump_importance(X, y, rounds, shrinkage).gains
    if not math.isfinite(float(en.sum() + boost.sum())):
        raise InputShapeError("non-finite feature scores")
    return rank_features(en, boost, names)
