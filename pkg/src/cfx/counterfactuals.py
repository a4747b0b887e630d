"""Counterfactual generators.

``mccf`` is a Wachter-style minimum-cost search: it minimises
``cost(x, w) + lam * (m(w) - (0.5 + margin))**2`` over the unit cube and
escalates ``lam`` geometrically until ``w`` crosses to the favorable class.
Each inner step is a proximal gradient step: a gradient step on the smooth
prediction penalty, then the exact proximal map of the (non-smooth) L2 or
L1 cost, then clipping to ``[0, 1]^d``.  Step sizes are chosen by
backtracking.  The analytic generators give exact closest counterfactuals
for linear and spherical boundaries and serve as test oracles.
"""

from dataclasses import dataclass

import numpy as np

from cfx.errors import InputError, PreconditionError
from cfx.targets import LinearTarget, SphereTarget


@dataclass(frozen=True)
class CfConfig:
    cost: str = "l2"
    target_margin: float = 1e-3
    max_outer: int = 30
    max_inner: int = 200
    step: float = 0.05
    lambda_init: float = 0.1
    lambda_growth: float = 2.0

    def __post_init__(self):
        if self.cost not in ("l2", "l1"):
            raise InputError(f"unknown cost {self.cost!r}")
        if not 0 < self.target_margin < 0.5:
            raise InputError("target_margin must lie in (0, 0.5)")
        if self.max_outer < 0 or self.max_inner < 0:
            raise InputError("iteration budgets must be nonnegative")
        if self.step <= 0 or self.lambda_init <= 0 or self.lambda_growth <= 1:
            raise InputError("step and lambda_init must be > 0, lambda_growth > 1")


@dataclass(frozen=True, eq=False)
class CfResult:
    w: np.ndarray
    converged: bool
    cost: float
    boundary_gap: float


def _cost(x, w, kind):
    d = w - x
    return float(np.abs(d).sum()) if kind == "l1" else float(np.linalg.norm(d))


def _prox(v, x, s, kind):
    d = v - x
    if kind == "l1":
        return x + np.sign(d) * np.maximum(np.abs(d) - s, 0.0)
    n = np.linalg.norm(d)
    if n <= s:
        return x.copy()
    return x + d * (1.0 - s / n)


def mccf(model, x, cfg=CfConfig()):
    """Minimum-cost counterfactual of an unfavorable point ``x``."""
    x = np.asarray(x, dtype=float)
    if model.predict_class(x) != 0:
        raise PreconditionError("query is already favorable; one-sided counterfactuals only")
    target = 0.5 + cfg.target_margin
    lam = cfg.lambda_init
    w = x.copy()
    converged = False

    def penalty(point):
        p = model.predict_proba(point)
        return lam * (p - target) ** 2

    for _ in range(cfg.max_outer):
        if cfg.max_inner == 0:
            break
        s = cfg.step
        for _ in range(cfg.max_inner):
            p, dp = model.value_and_input_gradient(w)
            f = lam * (p - target) ** 2
            g = 2.0 * lam * (p - target) * dp
            while True:
                w_new = np.clip(_prox(w - s * g, x, s, cfg.cost), 0.0, 1.0)
                diff = w_new - w
                if penalty(w_new) <= f + g @ diff + (diff @ diff) / (2.0 * s) or s < 1e-14:
                    break
                s *= 0.5
            w = w_new
            if np.linalg.norm(diff) < 1e-12:
                break
            s = min(2.0 * s, cfg.step)
        if model.predict_class(w) == 1:
            converged = True
            break
        lam *= cfg.lambda_growth
    return CfResult(w, converged, _cost(x, w, cfg.cost), abs(model.predict_proba(w) - 0.5))


def mccf_l1(model, x, cfg=CfConfig(cost="l1")):
    """:func:`mccf` with the L1 cost, which tends to move few coordinates."""
    if cfg.cost != "l1":
        cfg = CfConfig(**{**cfg.__dict__, "cost": "l1"})
    return mccf(model, x, cfg)


def one_nearest_neighbor_cf(x, favorable_pool, model=None):
    """Closest pool point in L2; ties go to the lowest index."""
    pool = np.asarray(favorable_pool, dtype=float)
    if pool.size == 0:
        raise InputError("favorable pool is empty")
    x = np.asarray(x, dtype=float)
    dist = np.linalg.norm(pool - x, axis=1)
    i = int(np.argmin(dist))
    gap = abs(model.predict_proba(pool[i]) - 0.5) if model is not None else float("nan")
    return CfResult(pool[i].copy(), True, float(dist[i]), gap)


def analytic_linear_cf(a, b, x, nudge=0.0):
    """Orthogonal projection of ``x`` onto ``a . w + b = 0``, moved ``nudge`` along ``a``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    norm2 = float(a @ a)
    if norm2 == 0.0:
        raise InputError("zero normal vector")
    w = x - ((a @ x + b) / norm2) * a
    return w + nudge * a / np.sqrt(norm2)


def analytic_sphere_cf(center, radius, x, nudge=0.0):
    """Closest point on the sphere to an outside point ``x`` (moved ``nudge`` inwards)."""
    c = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    diff = x - c
    r = np.linalg.norm(diff)
    if r == 0.0:
        raise InputError("query at the sphere centre has no unique projection")
    if r < radius - 1e-12:
        raise InputError("query lies inside the sphere")
    if abs(r - radius) <= 1e-12 and nudge == 0.0:
        return x.copy()
    return c + (radius - nudge) * diff / r


class MccfGenerator:
    """Binds :func:`mccf` to a configuration for use by an oracle."""

    def __init__(self, cfg=CfConfig()):
        self.cfg = cfg

    def __call__(self, model, x):
        return mccf(model, x, self.cfg)


class AnalyticGenerator:
    """Exact closest counterfactuals for :class:`LinearTarget` and :class:`SphereTarget`.

    The projection is pushed ``nudge`` into the favorable side (doubling until
    the target agrees) so rounding never yields an invalid counterfactual.
    """

    def __init__(self, nudge=1e-9):
        self.nudge = nudge

    def _project(self, model, x, nudge):
        if isinstance(model, LinearTarget):
            return analytic_linear_cf(model.a, model.b, x, nudge)
        if isinstance(model, SphereTarget):
            return analytic_sphere_cf(model.center, model.radius, x, nudge)
        raise InputError(f"no analytic counterfactual for {type(model).__name__}")

    def __call__(self, model, x):
        x = np.asarray(x, dtype=float)
        nudge = self.nudge
        for _ in range(40):
            w = self._project(model, x, nudge)
            if model.predict_class(w) == 1:
                return CfResult(w, True, float(np.linalg.norm(w - x)),
                                abs(model.predict_proba(w) - 0.5))
            nudge = max(2.0 * nudge, 1e-15)
        return CfResult(x.copy(), False, 0.0, abs(model.predict_proba(x) - 0.5))


class NearestNeighborGenerator:
    """Realistic counterfactuals: the closest favorable point of a fixed pool."""

    def __init__(self, pool):
        self.pool = np.asarray(pool, dtype=float)

    def __call__(self, model, x):
        pool = self.pool[np.asarray(model.predict_class(self.pool)) == 1]
        if len(pool) == 0:
            return CfResult(np.asarray(x, dtype=float).copy(), False, 0.0, float("nan"))
        return one_nearest_neighbor_cf(x, pool, model)
