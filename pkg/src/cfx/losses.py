"""Binary cross-entropy, binary entropy and the counterfactual clamping loss.

Counterfactual points carry the literal label 0.5.  The clamping loss treats
them one-sidedly: a surrogate output below the threshold ``k`` is pulled up
towards ``k``; an output at or above ``k`` costs nothing.  Ordinary points
(labels 0 and 1) get plain binary cross-entropy.  With ``k = 1`` the loss is
identical to labelling every counterfactual as class 1.

All functions accept scalars or numpy arrays and broadcast elementwise.
Logarithms are natural.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from cfx.errors import InputError

EPS = 1e-7
CF_LABEL = 0.5
_VALID_LABELS = (0.0, 0.5, 1.0)


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def clip_probability(p):
    return np.clip(np.asarray(p, dtype=float), EPS, 1.0 - EPS)


def bce(p, y):
    """Binary cross-entropy ``-y ln p - (1-y) ln(1-p)`` with ``p`` clipped."""
    p = clip_probability(p)
    y = np.asarray(y, dtype=float)
    return _out(-(xlogy(y, p) + xlogy(1.0 - y, 1.0 - p)))


def bce_grad(p, y):
    """Derivative of :func:`bce` with respect to ``p`` (at the clipped ``p``)."""
    p = clip_probability(p)
    y = np.asarray(y, dtype=float)
    return _out(-y / p + (1.0 - y) / (1.0 - p))


def binary_entropy(q):
    """``h(q) = -q ln q - (1-q) ln(1-q)``, with ``h(0) = h(1) = 0``."""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise InputError("binary entropy is defined on [0, 1]")
    return _out(-(xlogy(q, q) + xlogy(1.0 - q, 1.0 - q)))


def _check_labels(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, _VALID_LABELS)):
        raise InputError("labels must be 0, 0.5 or 1")
    return y


def _check_k(k):
    if not 0.0 < k <= 1.0:
        raise InputError(f"clamp threshold k must lie in (0, 1], got {k}")


def cca_loss(p, y, k=0.5):
    """Counterfactual clamping loss.

    For ``y == 0.5`` this is ``bce(p, k) - h(k)`` while ``p < k`` and zero
    otherwise; for ``y`` in {0, 1} it is ``bce(p, y)``.
    """
    _check_k(k)
    y = _check_labels(y)
    pc = clip_probability(p)
    is_cf = y == CF_LABEL
    target = np.where(is_cf, k, y)
    value = bce(pc, target)
    clamp = np.maximum(value - binary_entropy(k), 0.0)
    value = np.where(is_cf, np.where(pc < k, clamp, 0.0), value)
    return _out(value)


def cca_loss_grad(p, y, k=0.5):
    """``d cca_loss / dp``; zero on the flat side including the kink ``p == k``."""
    _check_k(k)
    y = _check_labels(y)
    pc = clip_probability(p)
    is_cf = y == CF_LABEL
    target = np.where(is_cf, k, y)
    grad = bce_grad(pc, target)
    grad = np.where(is_cf & (pc >= k), 0.0, grad)
    return _out(grad)


def soft_bce_ablation(p, y):
    """Plain BCE against labels 0, 0.5, 1 (symmetric around 0.5 for counterfactuals)."""
    return bce(p, _check_labels(y))


@dataclass(frozen=True)
class LossKind:
    """Which training objective to use.

    ``kind`` is one of ``"cca"``, ``"bce_baseline"`` (the clamping loss at
    ``k = 1``) or ``"soft_bce_ablation"``.
    """

    kind: str = "cca"
    k: float = 0.5

    def __post_init__(self):
        if self.kind not in ("cca", "bce_baseline", "soft_bce_ablation"):
            raise InputError(f"unknown loss kind {self.kind!r}")
        if self.kind == "bce_baseline" and self.k != 1.0:
            object.__setattr__(self, "k", 1.0)
        _check_k(self.k)

    @classmethod
    def cca(cls, k=0.5):
        return cls("cca", k)

    @classmethod
    def baseline(cls):
        return cls("bce_baseline", 1.0)

    @classmethod
    def soft_bce(cls):
        return cls("soft_bce_ablation", 0.5)


def loss_values(p, y, loss):
    """Per-sample loss values for a :class:`LossKind`."""
    if loss.kind == "soft_bce_ablation":
        return soft_bce_ablation(p, y)
    return cca_loss(p, y, loss.k)


def logit_gradient(p, y, loss):
    """Per-sample derivative of the loss with respect to the pre-sigmoid output.

    For an active sample with effective target ``t`` this is ``p - t``, the
    usual sigmoid/BCE simplification; inactive clamped counterfactuals give 0.
    """
    p = np.asarray(p, dtype=float)
    y = _check_labels(y)
    if loss.kind == "soft_bce_ablation":
        return p - y
    is_cf = y == CF_LABEL
    target = np.where(is_cf, loss.k, y)
    active = ~is_cf | (clip_probability(p) < loss.k)
    return np.where(active, p - target, 0.0)
