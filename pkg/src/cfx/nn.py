"""Dense ReLU binary classifiers with a single sigmoid output unit.

Weights are stored as ``(fan_in, fan_out)`` matrices so a layer computes
``a @ W + b``.  Networks are immutable; :func:`train` returns a new one.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from cfx import losses
from cfx.errors import FormatError, InputError, NumericError


@dataclass(frozen=True)
class NetworkArchitecture:
    input_dim: int
    hidden_sizes: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if int(self.input_dim) < 1:
            raise InputError("input_dim must be >= 1")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise InputError("hidden_sizes must be a nonempty list of positive integers")
        if self.seed < 0:
            raise InputError("seed must be unsigned")

    @property
    def layer_sizes(self):
        return (int(self.input_dim), *self.hidden_sizes, 1)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 200
    batch_size: int = 32
    l2_coefficient: float = 0.001
    learning_rate: float = 0.001
    optimizer: str = "adam"
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.l2_coefficient < 0:
            raise InputError("l2_coefficient must be >= 0")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True, eq=False)
class DenseNetwork:
    architecture: NetworkArchitecture
    weights: tuple
    biases: tuple

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=float) for w in self.weights)
        biases = tuple(np.array(b, dtype=float).reshape(-1) for b in self.biases)
        sizes = self.architecture.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(weights):
            raise InputError("number of layers does not match the architecture")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise InputError(f"layer {i} has shapes {w.shape}/{b.shape}, "
                                 f"expected {(sizes[i], sizes[i + 1])}/{(sizes[i + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {i} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def input_dim(self):
        return self.architecture.input_dim

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.input_dim,) or x.ndim > 2:
            raise InputError(f"expected points of dimension {self.input_dim}, got shape {x.shape}")
        return x

    def logit(self, x):
        """Pre-sigmoid output; a float for one point, an array for a batch."""
        x = self._check(x)
        a = np.atleast_2d(x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        z = (a @ self.weights[-1] + self.biases[-1])[:, 0]
        return float(z[0]) if x.ndim == 1 else z

    def predict_proba(self, x):
        z = self.logit(x)
        return float(expit(z)) if np.ndim(z) == 0 else expit(z)

    def predict_class(self, x):
        p = self.predict_proba(x)
        return int(p >= 0.5) if np.ndim(p) == 0 else (p >= 0.5).astype(int)

    def input_gradient(self, x):
        """Gradient of the output probability with respect to one input point."""
        return self.value_and_input_gradient(x)[1]

    def value_and_input_gradient(self, x):
        """``(probability, d probability / dx)`` for one point, skipping parameter grads."""
        x = self._check(x)
        acts, pre, z = _forward_cache(self, x[None, :])
        p = float(expit(z[0]))
        delta = p * (1.0 - p) * self.weights[-1][:, 0]
        for i in range(len(self.weights) - 2, -1, -1):
            delta = (delta * (pre[i][0] > 0)) @ self.weights[i].T
        return p, delta


def init_network(arch):
    """Glorot-uniform weights and zero biases, seeded by ``arch.seed``."""
    rng = np.random.default_rng(arch.seed)
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNetwork(arch, tuple(weights), tuple(biases))


def forward(net, x):
    return net.predict_proba(x)


def predict_class(net, x):
    """1 iff the output probability is >= 0.5."""
    return net.predict_class(x)


def _forward_cache(net, X):
    acts = [X]
    pre = []
    a = X
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    z = (a @ net.weights[-1] + net.biases[-1])[:, 0]
    return acts, pre, z


def _backprop(net, acts, pre, dz, need_input=False):
    """Propagate per-sample logit gradients ``dz`` (shape (n,)) to parameters."""
    grads = [None] * len(net.weights)
    delta = dz[:, None]
    for i in range(len(net.weights) - 1, -1, -1):
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i == 0 and not need_input:
            break
        delta = delta @ net.weights[i].T
        if i > 0:
            # ReLU subgradient is 0 at an exactly-zero pre-activation
            delta = delta * (pre[i - 1] > 0)
    return grads, (delta if need_input else None)


def backward(net, x, upstream=1.0):
    """Gradients of ``upstream * forward(net, x)`` for one point.

    Returns ``(layer_grads, input_grad)`` where ``layer_grads`` is a list of
    ``(dW, db)`` pairs shaped like the parameters.
    """
    x = net._check(x)
    if x.ndim != 1:
        raise InputError("backward takes a single point")
    acts, pre, z = _forward_cache(net, x[None, :])
    p = expit(z)
    dz = upstream * p * (1.0 - p)
    grads, dx = _backprop(net, acts, pre, dz, need_input=True)
    dx = dx[0]
    if not np.all(np.isfinite(dx)) or not all(np.all(np.isfinite(g)) for gw in grads for g in gw):
        raise NumericError("non-finite gradient")
    return grads, dx


def _as_arrays(data):
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        X, y = data
    else:
        data = list(data)
        if not data:
            raise InputError("training data is empty")
        X = np.array([np.asarray(p.x, dtype=float) for p in data])
        y = np.array([p.y for p in data], dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0 or len(y) != len(X):
        raise InputError("training data is empty or ragged")
    return X, y


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class _SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def train(net, data, cfg=TrainingConfig(), loss=losses.LossKind.baseline(), history=None):
    """Mini-batch training; returns a new network.

    ``data`` is a sequence of labelled points (objects with ``x`` and ``y``)
    or an ``(X, y)`` pair of arrays.  The objective is the batch-mean loss
    plus ``l2_coefficient * sum(W**2)`` over weight matrices.  If ``history``
    is a list, the epoch-mean data loss is appended to it after each epoch.
    """
    X, y = _as_arrays(data)
    if X.shape[1] != net.input_dim:
        raise InputError(f"data dimension {X.shape[1]} != network input_dim {net.input_dim}")
    losses._check_labels(y)
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    if cfg.epochs == 0:
        return net
    params = [p for pair in zip(weights, biases) for p in pair]
    opt = _Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else _SGD(params, cfg.learning_rate)
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = len(X)
    work = DenseNetwork.__new__(DenseNetwork)
    object.__setattr__(work, "architecture", net.architecture)
    object.__setattr__(work, "weights", weights)
    object.__setattr__(work, "biases", biases)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            acts, pre, z = _forward_cache(work, xb)
            p = expit(z)
            if history is not None:
                total += float(np.sum(losses.loss_values(p, yb, loss)))
            dz = losses.logit_gradient(p, yb, loss) / len(idx)
            grads, _ = _backprop(work, acts, pre, dz)
            flat = []
            for w, (dw, db) in zip(weights, grads):
                if cfg.l2_coefficient:
                    dw = dw + 2.0 * cfg.l2_coefficient * w
                flat.extend((dw, db))
            opt.step(params, flat)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise NumericError("training diverged")
        if history is not None:
            history.append(total / n)
    return DenseNetwork(net.architecture, tuple(weights), tuple(biases))


def spectral_norm(w, iterations=50, tol=1e-8):
    """Largest singular value by power iteration on ``W^T W``."""
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        return 0.0
    v = np.random.default_rng(0).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iterations):
        u = w @ v
        new_sigma = float(np.linalg.norm(u))
        if new_sigma == 0.0:
            return 0.0
        v = w.T @ (u / new_sigma)
        v /= np.linalg.norm(v)
        if abs(new_sigma - sigma) <= tol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(np.linalg.norm(w @ v))


def lipschitz_upper_bound(net, iterations=50, tol=1e-8):
    """Product of per-layer spectral norms: an L2 Lipschitz bound on the logit.

    The sigmoid's 1/4 slope factor is not included.
    """
    out = 1.0
    for w in net.weights:
        out *= spectral_norm(w, iterations, tol)
    return out


def to_dict(net):
    return {
        "input_dim": int(net.input_dim),
        "hidden_sizes": list(net.architecture.hidden_sizes),
        "weights": [w.ravel(order="C").tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_dict(payload, seed=0):
    try:
        arch = NetworkArchitecture(int(payload["input_dim"]), tuple(payload["hidden_sizes"]), seed)
        sizes = arch.layer_sizes
        raw_w, raw_b = payload["weights"], payload["biases"]
        if len(raw_w) != len(sizes) - 1 or len(raw_b) != len(sizes) - 1:
            raise FormatError("layer count does not match hidden_sizes")
        weights, biases = [], []
        for i, (w, b) in enumerate(zip(raw_w, raw_b)):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.shape != (sizes[i] * sizes[i + 1],) or b.shape != (sizes[i + 1],):
                raise FormatError(f"layer {i} shape does not match the header architecture")
            weights.append(w.reshape(sizes[i], sizes[i + 1]))
            biases.append(b)
        return DenseNetwork(arch, tuple(weights), tuple(biases))
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, NumericError) as exc:
        raise FormatError(f"malformed model payload: {exc}") from exc


def serialize(net):
    return json.dumps(to_dict(net)).encode("utf-8")


def deserialize(blob):
    try:
        payload = json.loads(blob)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError("model file must hold a JSON object")
    return from_dict(payload)


def save(net, path):
    with open(path, "wb") as fh:
        fh.write(serialize(net))


def load(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
