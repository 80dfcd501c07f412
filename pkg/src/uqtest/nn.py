"""Small feed-forward regressors trained with numpy backprop.

The networks here are hosts for the uncertainty estimators, nothing more:
dense layers, three activations, inverted dropout on hidden layers and an
optional Gaussian head that emits a mean and a positive scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import rng
from .errors import ConfigurationError, DomainError, StateError, TrainingDivergedError

CHECKPOINT_FORMAT = "uqtest.mlp"
CHECKPOINT_VERSION = 1
DEFAULT_SIGMA_FLOOR = 1e-4
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _identity(z):
    return z


def _identity_grad(z):
    return np.ones_like(z)


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0.0).astype(z.dtype)


def _tanh_grad(z):
    t = np.tanh(z)
    return 1.0 - t * t


ACTIVATIONS = {
    "identity": (_identity, _identity_grad),
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
}
HEADS = ("point", "gaussian")
LOSSES = ("mse", "gaussian_nll")
OPTIMIZERS = ("sgd", "adam")


def softplus(s):
    return np.logaddexp(0.0, s)


@dataclass(frozen=True, eq=False)
class Mlp:
    """Dense network; ``weights[i]`` has shape ``(out, in)``.

    A gaussian head doubles the last layer: the first half of its outputs
    is the mean, the second half a raw scale ``s`` mapped to
    ``softplus(s) + sigma_floor``.
    """

    weights: tuple
    biases: tuple
    activations: tuple
    dropout: tuple
    head: str = "point"
    sigma_floor: float = DEFAULT_SIGMA_FLOOR

    def __post_init__(self):
        w = tuple(np.array(a, dtype=np.float64) for a in self.weights)
        b = tuple(np.array(a, dtype=np.float64).reshape(-1) for a in self.biases)
        for a in w + b:
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "dropout", tuple(float(p) for p in self.dropout))

        n = len(w)
        if n == 0 or len(b) != n or len(self.activations) != n:
            raise ConfigurationError("weights, biases and activations must have equal non-zero length")
        if len(self.dropout) != n - 1:
            raise ConfigurationError(f"expected {n - 1} hidden dropout rates, got {len(self.dropout)}")
        for i in range(n):
            if w[i].ndim != 2 or b[i].shape != (w[i].shape[0],):
                raise ConfigurationError(f"layer {i}: bias shape {b[i].shape} does not match weight {w[i].shape}")
            if i > 0 and w[i].shape[1] != w[i - 1].shape[0]:
                raise ConfigurationError(
                    f"layer {i}: input width {w[i].shape[1]} != previous output width {w[i - 1].shape[0]}"
                )
            if self.activations[i] not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {self.activations[i]!r}")
        for p in self.dropout:
            if not 0.0 <= p < 1.0:
                raise ConfigurationError(f"dropout rate must lie in [0, 1), got {p}")
        if self.head not in HEADS:
            raise ConfigurationError(f"unknown head {self.head!r}")
        if self.head == "gaussian" and w[-1].shape[0] % 2:
            raise ConfigurationError("gaussian head needs an even number of final outputs")
        if not self.sigma_floor > 0.0:
            raise ConfigurationError("sigma_floor must be positive")

    @classmethod
    def init(cls, widths, activation="tanh", head="point", dropout=0.0, seed=0,
             sigma_floor=DEFAULT_SIGMA_FLOOR):
        """Glorot-uniform initialisation.

        ``widths`` lists input, hidden and output widths; the output width
        counts means only (a gaussian head adds as many scale units).
        ``activation`` applies to hidden layers, the output layer is linear.
        """
        widths = [int(v) for v in widths]
        if len(widths) < 2 or any(v < 1 for v in widths):
            raise ConfigurationError(f"widths must be >= 2 positive integers, got {widths}")
        outs = widths[1:-1] + [widths[-1] * (2 if head == "gaussian" else 1)]
        ins = widths[:-1]
        gen = rng.stream(seed, "init")
        weights, biases = [], []
        for fan_in, fan_out in zip(ins, outs):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(gen.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        n_hidden = len(widths) - 2
        if np.isscalar(dropout):
            dropout = [float(dropout)] * n_hidden
        acts = [activation] * n_hidden + ["identity"]
        return cls(tuple(weights), tuple(biases), tuple(acts), tuple(dropout), head, sigma_floor)

    @property
    def n_inputs(self):
        return self.weights[0].shape[1]

    @property
    def n_outputs(self):
        out = self.weights[-1].shape[0]
        return out // 2 if self.head == "gaussian" else out

    @property
    def widths(self):
        return [self.n_inputs] + [w.shape[0] for w in self.weights[:-1]] + [self.n_outputs]

    def with_params(self, weights, biases):
        return Mlp(tuple(weights), tuple(biases), self.activations, self.dropout, self.head, self.sigma_floor)

    def with_dropout(self, rate):
        return Mlp(self.weights, self.biases, self.activations, (float(rate),) * len(self.dropout),
                   self.head, self.sigma_floor)

    def flat_params(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def from_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        weights, biases, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[k:k + w.size].reshape(w.shape))
            k += w.size
            biases.append(flat[k:k + b.size].copy())
            k += b.size
        return self.with_params(weights, biases)

    def to_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "widths": self.widths,
            "activations": list(self.activations),
            "dropout": list(self.dropout),
            "head": self.head,
            "sigma_floor": self.sigma_floor,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError(f"not an MLP checkpoint (format={doc.get('format')!r})")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {doc.get('version')!r}")
        widths = doc["widths"]
        outs = widths[1:-1] + [widths[-1] * (2 if doc["head"] == "gaussian" else 1)]
        weights = [np.asarray(w, dtype=np.float64).reshape(o, i)
                   for w, o, i in zip(doc["weights"], outs, widths[:-1])]
        return cls(tuple(weights), tuple(np.asarray(b) for b in doc["biases"]),
                   tuple(doc["activations"]), tuple(doc["dropout"]), doc["head"], doc["sigma_floor"])


def save_checkpoint(mlp, path):
    Path(path).write_text(json.dumps(mlp.to_dict()))


def load_checkpoint(path):
    return Mlp.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    loss: str = "mse"
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")


def gaussian_nll_loss(mu, sigma, y):
    """Negative log-likelihood of ``y`` under N(mu, sigma^2); elementwise."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(~(sigma > 0)):
        raise DomainError("sigma must be > 0")
    r = (np.asarray(y, dtype=np.float64) - mu) / sigma
    out = np.log(sigma) + 0.5 * r * r + HALF_LOG_2PI
    return float(out) if out.ndim == 0 else out


def _as_batch(mlp, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.ndim != 2 or X.shape[1] != mlp.n_inputs:
        raise ConfigurationError(f"input width {X.shape[-1]} != network input width {mlp.n_inputs}")
    return X, single


def _check_finite_params(mlp):
    for w, b in zip(mlp.weights, mlp.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise StateError("network has non-finite weights")


def _dropout_masks(mlp, n_rows, gen, rates=None):
    rates = mlp.dropout if rates is None else rates
    masks = []
    for w, p in zip(mlp.weights[:-1], rates):
        if p > 0.0:
            keep = gen.random((n_rows, w.shape[0])) >= p
            masks.append(keep / (1.0 - p))
        else:
            masks.append(None)
    return masks


def _forward(mlp, X, masks=None):
    """Run the layers, keeping what backprop needs."""
    pre, post = [], [X]
    h = X
    last = len(mlp.weights) - 1
    for i, (w, b, act) in enumerate(zip(mlp.weights, mlp.biases, mlp.activations)):
        z = h @ w.T + b
        h = ACTIVATIONS[act][0](z)
        if i < last and masks is not None and masks[i] is not None:
            h = h * masks[i]
        pre.append(z)
        post.append(h)
    return pre, post


def _split_head(mlp, out):
    if mlp.head == "point":
        return out, None
    d = mlp.n_outputs
    return out[:, :d], softplus(out[:, d:]) + mlp.sigma_floor


def forward(mlp, x, stochastic=False, seed=None):
    """Evaluate the network.

    Returns ``(mu, sigma)``; ``sigma`` is None for a point head. A 1-D ``x``
    yields 1-D outputs, a ``(N, d)`` batch yields ``(N, out)`` arrays.
    ``stochastic=True`` samples one dropout mask per hidden layer from
    ``seed`` and applies it to every row, i.e. it evaluates one sampled
    sub-network. A row's output therefore does not depend on the batch it
    was evaluated in (up to floating-point summation order).
    """
    X, single = _as_batch(mlp, x)
    _check_finite_params(mlp)
    masks = None
    if stochastic:
        if seed is None:
            raise ConfigurationError("stochastic forward pass requires a seed")
        masks = _dropout_masks(mlp, 1, rng.stream(seed, "dropout-forward"))
    _, post = _forward(mlp, X, masks)
    mu, sigma = _split_head(mlp, post[-1])
    if single:
        mu = mu[0]
        sigma = None if sigma is None else sigma[0]
    return mu, sigma


def _loss_and_output_grad(mlp, out, Y, loss):
    """Mean loss over the batch and its gradient w.r.t. the raw output layer."""
    n = out.shape[0]
    mu, sigma = _split_head(mlp, out)
    grad = np.zeros_like(out)
    d = mlp.n_outputs
    if loss == "mse":
        diff = mu - Y
        value = float(np.mean(np.sum(diff * diff, axis=1)))
        grad[:, :d] = 2.0 * diff / n
        return value, grad
    if sigma is None:
        raise ConfigurationError("gaussian_nll loss requires a gaussian head")
    diff = mu - Y
    inv_var = 1.0 / (sigma * sigma)
    value = float(np.mean(np.sum(np.log(sigma) + 0.5 * diff * diff * inv_var + HALF_LOG_2PI, axis=1)))
    grad[:, :d] = diff * inv_var / n
    dsigma = (1.0 / sigma - diff * diff * inv_var / sigma) / n
    grad[:, d:] = dsigma * expit(out[:, d:])
    return value, grad


def _backward(mlp, pre, post, masks, grad_out):
    gw = [None] * len(mlp.weights)
    gb = [None] * len(mlp.weights)
    g = grad_out
    for i in range(len(mlp.weights) - 1, -1, -1):
        if i < len(mlp.weights) - 1 and masks is not None and masks[i] is not None:
            g = g * masks[i]
        g = g * ACTIVATIONS[mlp.activations[i]][1](pre[i])
        gw[i] = g.T @ post[i]
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = g @ mlp.weights[i]
    return gw, gb


def loss_and_grads(mlp, X, Y, loss, masks=None):
    pre, post = _forward(mlp, X, masks)
    value, grad_out = _loss_and_output_grad(mlp, post[-1], Y, loss)
    gw, gb = _backward(mlp, pre, post, masks, grad_out)
    return value, gw, gb


def _targets(mlp, y):
    Y = np.asarray(y, dtype=np.float64)
    return Y.reshape(-1, mlp.n_outputs)


@dataclass
class TrainResult:
    model: Mlp
    loss_trace: list = field(default_factory=list)


def train(mlp, data, cfg):
    """Mini-batch training; bit-reproducible for a given ``(cfg, data)``.

    ``data`` is anything with ``x`` (N, d) and ``y`` (N,) attributes. Batch
    order and dropout masks come from streams keyed by ``(seed, epoch)``.
    """
    X, _ = _as_batch(mlp, data.x)
    Y = _targets(mlp, data.y)
    if X.shape[0] == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    if X.shape[0] != Y.shape[0]:
        raise ConfigurationError("x and y row counts differ")
    if cfg.loss == "gaussian_nll" and mlp.head != "gaussian":
        raise ConfigurationError("gaussian_nll loss requires a gaussian head")

    weights = [w.copy() for w in mlp.weights]
    biases = [b.copy() for b in mlp.biases]
    params = weights + biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    n = X.shape[0]
    trace = []
    current = mlp
    for epoch in range(cfg.epochs):
        order = rng.stream(cfg.seed, "shuffle", epoch).permutation(n)
        mask_gen = rng.stream(cfg.seed, "dropout", epoch)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = _dropout_masks(current, len(idx), mask_gen)
            value, gw, gb = loss_and_grads(current, X[idx], Y[idx], cfg.loss, masks)
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch)
            total += value * len(idx)
            grads = gw + gb
            if cfg.weight_decay:
                for j in range(len(weights)):
                    grads[j] = grads[j] + cfg.weight_decay * params[j]
            step += 1
            for j, (p, g) in enumerate(zip(params, grads)):
                if cfg.optimizer == "sgd":
                    p -= cfg.learning_rate * g
                else:
                    m1[j] = cfg.beta1 * m1[j] + (1 - cfg.beta1) * g
                    m2[j] = cfg.beta2 * m2[j] + (1 - cfg.beta2) * g * g
                    mhat = m1[j] / (1 - cfg.beta1**step)
                    vhat = m2[j] / (1 - cfg.beta2**step)
                    p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
            current = mlp.with_params(weights, biases)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch)
        trace.append(epoch_loss)
    final = mlp.with_params(weights, biases)
    _check_finite_params(final)
    return TrainResult(final, trace)


def grad_check(mlp, x, y, loss, h=1e-5):
    """Max relative error between backprop and central-difference gradients.

    Deterministic mode only. The denominator is ``max(|analytic|, 1e-8)``.
    """
    X, _ = _as_batch(mlp, x)
    Y = _targets(mlp, y)
    _, gw, gb = loss_and_grads(mlp, X, Y, loss)
    analytic = np.concatenate([a.ravel() for pair in zip(gw, gb) for a in pair])
    theta = mlp.flat_params()
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        t = theta.copy()
        t[k] += h
        up = loss_and_grads(mlp.from_flat(t), X, Y, loss)[0]
        t[k] -= 2 * h
        down = loss_and_grads(mlp.from_flat(t), X, Y, loss)[0]
        numeric[k] = (up - down) / (2 * h)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1e-8)))
