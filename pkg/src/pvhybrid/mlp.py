"""Feedforward network trained by plain gradient descent.

Hidden layers use one of the configured activations; the output layer is
always the identity (regression).  Training minimises half the mean squared
error, so per-sample gradients are those of ``0.5 * (yhat - y)**2``.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DivergenceError, EmptyInputError, InputShapeError, PvHybridError

FORMAT_VERSION = 1


class Activation(enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


def sigmoid(v):
    v = np.asarray(v, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def softmax(v):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - np.max(v, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def activate(a: Activation | str, v) -> np.ndarray:
    a = Activation(a)
    v = np.asarray(v, dtype=np.float64)
    if a is Activation.SIGMOID:
        return sigmoid(v)
    if a is Activation.TANH:
        return np.tanh(v)
    if a is Activation.RELU:
        return np.maximum(v, 0.0)
    if a is Activation.SOFTMAX:
        return softmax(v)
    return v.copy()


def _apply_derivative(a: Activation, h: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``delta * phi'(z)`` written in terms of the layer output ``h = phi(z)``."""
    if a is Activation.IDENTITY:
        return delta
    if a is Activation.TANH:
        d = np.multiply(h, h)
        np.subtract(1.0, d, out=d)
    elif a is Activation.SIGMOID:
        d = np.subtract(1.0, h)
        d *= h
    elif a is Activation.RELU:
        d = (h > 0).astype(np.float64)
    else:
        raise PvHybridError(f"{a.value} has no elementwise derivative")
    d *= delta
    return d


@dataclass(frozen=True)
class MlpConfig:
    """``batch_size=None`` means full-batch descent."""

    layer_widths: tuple = (2, 50, 1)
    hidden_activation: Activation = Activation.TANH
    learning_rate: float = 0.1
    max_iterations: int = 3000
    batch_size: int | None = None
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        if len(self.layer_widths) < 2 or min(self.layer_widths) < 1:
            raise ValueError("layer_widths needs >= 2 positive entries")
        if self.layer_widths[-1] != 1:
            raise ValueError("regression output width must be 1")
        if self.hidden_activation in (Activation.SOFTMAX, Activation.IDENTITY):
            raise ValueError(f"{self.hidden_activation.value} is not a hidden activation")
        if not self.learning_rate > 0 or not self.init_scale > 0:
            raise ValueError("learning_rate and init_scale must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def activation_of(self, layer: int) -> Activation:
        last = len(self.layer_widths) - 2
        return Activation.IDENTITY if layer == last else self.hidden_activation


@dataclass
class NetworkParams:
    """``weights[l]`` has shape (width[l+1], width[l]); ``biases[l]`` (width[l+1],)."""

    weights: list
    biases: list

    @property
    def widths(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def __eq__(self, other):
        if not isinstance(other, NetworkParams) or len(self.weights) != len(other.weights):
            return NotImplemented
        return all(
            np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


def init_params(cfg: MlpConfig) -> NetworkParams:
    rng = np.random.default_rng(cfg.seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(cfg.layer_widths[:-1], cfg.layer_widths[1:]):
        ws.append(rng.uniform(-cfg.init_scale, cfg.init_scale, size=(fan_out, fan_in)))
        bs.append(rng.uniform(-cfg.init_scale, cfg.init_scale, size=fan_out))
    return NetworkParams(ws, bs)


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # activation entering each layer
    post: list = field(default_factory=list)  # phi(W a + b)


def _check_params(p: NetworkParams, cfg: MlpConfig) -> None:
    if p.widths != cfg.layer_widths:
        raise InputShapeError(f"params have widths {p.widths}, config says {cfg.layer_widths}")


def forward_batch(p: NetworkParams, cfg: MlpConfig, X) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass over the rows of ``X``; returns (n, width_out) outputs."""
    _check_params(p, cfg)
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != cfg.layer_widths[0]:
        raise InputShapeError(f"expected n x {cfg.layer_widths[0]} input, got {A.shape}")
    cache = ForwardCache()
    for layer, (W, b) in enumerate(zip(p.weights, p.biases)):
        cache.inputs.append(A)
        Z = A @ W.T
        Z += b
        act = cfg.activation_of(layer)
        if act is Activation.TANH:
            A = np.tanh(Z, out=Z)
        elif act is Activation.RELU:
            A = np.maximum(Z, 0.0, out=Z)
        elif act is Activation.IDENTITY:
            A = Z
        else:
            A = activate(act, Z)
        cache.post.append(A)
    return A, cache


def forward(p: NetworkParams, cfg: MlpConfig, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputShapeError(f"expected a vector, got shape {x.shape}")
    out, cache = forward_batch(p, cfg, x[None, :])
    return out[0], cache


def _backward(p: NetworkParams, cfg: MlpConfig, cache: ForwardCache, dout: np.ndarray):
    """Gradients given dLoss/dOutput for every row, summed over rows."""
    gw = [None] * len(p.weights)
    gb = [None] * len(p.biases)
    delta = dout
    for layer in reversed(range(len(p.weights))):
        dz = _apply_derivative(cfg.activation_of(layer), cache.post[layer], delta)
        gw[layer] = dz.T @ cache.inputs[layer]
        gb[layer] = dz.sum(axis=0)
        if layer:
            W = p.weights[layer]
            # a width-1 layer's product has no summation, so broadcasting is exact
            delta = dz * W[0] if W.shape[0] == 1 else dz @ W
    return NetworkParams(gw, gb)


def backprop_gradients(p: NetworkParams, cfg: MlpConfig, x, target) -> NetworkParams:
    """Exact gradients of ``0.5 * ||yhat - target||**2`` for a single sample."""
    out, cache = forward(p, cfg, x)
    t = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if t.shape != out.shape:
        raise InputShapeError(f"target shape {t.shape} != output shape {out.shape}")
    return _backward(p, cfg, cache, (out - t)[None, :])


def loss(p: NetworkParams, cfg: MlpConfig, X, y) -> float:
    """Half mean squared error."""
    out, _ = forward_batch(p, cfg, X)
    err = out[:, 0] - np.asarray(y, dtype=np.float64)
    return 0.5 * float(np.mean(err * err))


def predict(p: NetworkParams, cfg: MlpConfig, X) -> np.ndarray:
    return forward_batch(p, cfg, X)[0][:, 0]


@dataclass
class TrainResult:
    params: NetworkParams
    # half-MSE of the batch used at each iteration (the whole set in full-batch mode)
    loss_trace: list


def train(cfg: MlpConfig, X, y) -> TrainResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] == 0 or y.size == 0:
        raise EmptyInputError("train needs at least one row")
    if X.shape[0] != y.size:
        raise InputShapeError(f"X has {X.shape[0]} rows but y has {y.size}")
    p = init_params(cfg)
    n = y.size
    batch_rng = np.random.default_rng([cfg.seed, 1])
    trace = []
    for it in range(cfg.max_iterations):
        if cfg.batch_size is None or cfg.batch_size >= n:
            idx = None
        else:
            idx = np.sort(batch_rng.choice(n, size=cfg.batch_size, replace=False))
        Xb = X if idx is None else X[idx]
        yb = y if idx is None else y[idx]
        out, cache = forward_batch(p, cfg, Xb)
        err = out[:, 0] - yb
        with np.errstate(over="ignore", invalid="ignore"):
            current = 0.5 * float(np.mean(err * err))
        if not math.isfinite(current):
            raise DivergenceError(it)
        trace.append(current)
        g = _backward(p, cfg, cache, err[:, None] / yb.size)
        for layer in range(len(p.weights)):
            p.weights[layer] -= cfg.learning_rate * g.weights[layer]
            p.biases[layer] -= cfg.learning_rate * g.biases[layer]
    if cfg.max_iterations and not all(np.isfinite(a).all() for a in p.weights + p.biases):
        raise DivergenceError(cfg.max_iterations)
    return TrainResult(p, trace)


# ---------------------------------------------------------------------------
# random search


@dataclass(frozen=True)
class SearchResult:
    best: MlpConfig
    best_rmse: float
    trials: tuple  # (MlpConfig, validation rmse) in sampling order


def _sample_value(spec, rng):
    if isinstance(spec, tuple) and len(spec) == 2 and all(isinstance(v, (int, float)) for v in spec):
        lo, hi = spec
        if isinstance(lo, int) and isinstance(hi, int):
            return int(rng.integers(lo, hi + 1))
        return float(rng.uniform(lo, hi))
    if isinstance(spec, (list, tuple)):
        return spec[int(rng.integers(len(spec)))]
    return spec


def sample_configs(base: MlpConfig, space: dict, budget: int, seed: int) -> list:
    """``space`` maps MlpConfig field names to a ``(lo, hi)`` range or a list of choices.

    Candidate ``i`` depends only on ``(seed, i)``, so a larger budget extends
    a smaller one.
    """
    out = []
    for i in range(budget):
        rng = np.random.default_rng([seed, i])
        values = {name: _sample_value(space[name], rng) for name in sorted(space)}
        values["seed"] = int(np.random.default_rng([seed, i, 1]).integers(2**63))
        out.append(replace(base, **values))
    return out


def random_search(
    base: MlpConfig,
    space: dict,
    budget: int,
    X_train,
    y_train,
    X_val,
    y_val,
    seed: int = 0,
    n_jobs: int = 1,
) -> SearchResult:
    """Train ``budget`` sampled configs and keep the lowest validation RMSE."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    candidates = sample_configs(base, space, budget, seed)
    y_val = np.asarray(y_val, dtype=np.float64)

    def run(cfg):
        try:
            params = train(cfg, X_train, y_train).params
        except DivergenceError:
            return math.inf
        err = predict(params, cfg, X_val) - y_val
        return math.sqrt(float(np.mean(err * err)))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            scores = list(pool.map(run, candidates))
    else:
        scores = [run(c) for c in candidates]
    # first minimum wins ties
    best_i = min(range(budget), key=lambda i: (scores[i], i))
    return SearchResult(candidates[best_i], scores[best_i], tuple(zip(candidates, scores)))


# ---------------------------------------------------------------------------
# text serialisation


def dumps(p: NetworkParams, cfg: MlpConfig) -> str:
    lines = [
        f"mlp-params v{FORMAT_VERSION}",
        "widths " + " ".join(str(w) for w in p.widths),
        f"activation {cfg.hidden_activation.value}",
    ]
    for layer, (W, b) in enumerate(zip(p.weights, p.biases)):
        lines.append(f"W {layer} {W.shape[0]} {W.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in W)
        lines.append(f"b {layer} {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    return "\n".join(lines) + "\n"


def loads(text: str, cfg: MlpConfig | None = None) -> tuple[NetworkParams, MlpConfig]:
    """Inverse of :func:`dumps`.  Training fields of ``cfg`` are kept if given."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"mlp-params v{FORMAT_VERSION}":
        raise PvHybridError("not an mlp-params v1 file")
    widths = tuple(int(v) for v in lines[1].split()[1:])
    act = Activation(lines[2].split()[1])
    pos = 3
    ws, bs = [], []
    for layer in range(len(widths) - 1):
        _, _, rows, cols = lines[pos].split()
        rows, cols = int(rows), int(cols)
        W = np.array([[float(v) for v in lines[pos + 1 + r].split()] for r in range(rows)])
        pos += 1 + rows
        b = np.array([float(v) for v in lines[pos + 1].split()])
        pos += 2
        if W.shape != (widths[layer + 1], widths[layer]) or b.shape != (widths[layer + 1],):
            raise PvHybridError(f"layer {layer} has inconsistent shapes")
        ws.append(W)
        bs.append(b)
    base = cfg or MlpConfig(layer_widths=widths, hidden_activation=act)
    return NetworkParams(ws, bs), replace(base, layer_widths=widths, hidden_activation=act)


def widths_for(n_inputs: int, hidden: Sequence[int]) -> tuple:
    return (n_inputs, *hidden, 1)
