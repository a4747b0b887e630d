"""Analytic target models with exactly known decision boundaries.

They expose the same prediction surface as :class:`cfx.nn.DenseNetwork`
(``predict_proba``, ``predict_class``, ``value_and_input_gradient``) so the
counterfactual generators and metrics treat them interchangeably.  The class
is decided on the exact geometry, not on the rounded sigmoid.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from cfx.errors import InputError


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (d,) or x.ndim > 2:
        raise InputError(f"expected points of dimension {d}, got shape {x.shape}")
    return x


class _AnalyticTarget:
    def predict_proba(self, x):
        z = self.logit(x)
        return float(expit(z)) if np.ndim(z) == 0 else expit(z)

    def value_and_input_gradient(self, x):
        x = _points(x, self.input_dim)
        z = self.logit(x)
        p = float(expit(z))
        return p, p * (1.0 - p) * self.logit_gradient(x)

    def input_gradient(self, x):
        return self.value_and_input_gradient(x)[1]


@dataclass(frozen=True, eq=False)
class LinearTarget(_AnalyticTarget):
    """Favorable side ``a . x + b >= 0``; probability ``sigmoid(steepness * (a . x + b))``."""

    a: np.ndarray
    b: float
    steepness: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if not np.any(a):
            raise InputError("linear target needs a nonzero normal")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def input_dim(self):
        return len(self.a)

    def score(self, x):
        s = _points(x, self.input_dim) @ self.a + self.b
        return float(s) if np.ndim(s) == 0 else s

    def logit(self, x):
        return self.steepness * self.score(x)

    def logit_gradient(self, x):
        return self.steepness * self.a

    def logit_lipschitz(self):
        return float(abs(self.steepness) * np.linalg.norm(self.a))

    def predict_class(self, x):
        s = self.score(x)
        return int(s >= 0) if np.ndim(s) == 0 else (s >= 0).astype(int)

    def rejected_volume(self, samples=None):
        """Volume of ``{a . x + b < 0}`` in the unit cube (exact for axis-aligned normals)."""
        nz = np.flatnonzero(self.a)
        if len(nz) == 1:
            i = nz[0]
            cut = -self.b / self.a[i]
            frac = np.clip(cut, 0.0, 1.0)
            return float(frac if self.a[i] > 0 else 1.0 - frac)
        rng = np.random.default_rng(0)
        z = rng.random((samples or 200_000, self.input_dim))
        return float(np.mean(z @ self.a + self.b < 0))


@dataclass(frozen=True, eq=False)
class SphereTarget(_AnalyticTarget):
    """Favorable region is the closed ball ``||x - center|| <= radius``."""

    center: np.ndarray
    radius: float = 1.0
    steepness: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if self.radius <= 0:
            raise InputError("radius must be positive")

    @classmethod
    def quadrant(cls, d, steepness=1.0):
        """Unit sphere centred at (1, ..., 1), the spherical-boundary benchmark."""
        return cls(np.ones(d), 1.0, steepness)

    @property
    def input_dim(self):
        return len(self.center)

    def distance(self, x):
        r = np.linalg.norm(_points(x, self.input_dim) - self.center, axis=-1)
        return float(r) if np.ndim(r) == 0 else r

    def logit(self, x):
        return self.steepness * (self.radius - self.distance(x))

    def logit_gradient(self, x):
        diff = x - self.center
        r = np.linalg.norm(diff)
        if r == 0:
            return np.zeros_like(diff)
        return -self.steepness * diff / r

    def logit_lipschitz(self):
        return float(abs(self.steepness))

    def predict_class(self, x):
        r = self.distance(x)
        return int(r <= self.radius) if np.ndim(r) == 0 else (r <= self.radius).astype(int)
