"""Monte-Carlo checks of the query-complexity results.

* Grid coverage: an ``epsilon`` grid over the unit cube, the cells whose
  corners disagree on the class (a proxy for "the boundary passes through
  this cell"), brute-force volumes of the inverse counterfactual regions,
  and the coverage-probability lower bound ``1 - k (1 - v*)^n``.
* Linear targets: reconstruction needs a single rejected query, so its
  probability is ``1 - (1 - v)^n`` with ``v`` the rejected volume.
* Polytope convergence on the spherical benchmark, fitted on a log-log scale
  against the ``-2 / (d - 1)`` rate.
* The clamp bound in triangle-inequality form with global Lipschitz
  constants, which holds deterministically.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from cfx import nn
from cfx.attacks import polytope_from_pairs
from cfx.counterfactuals import AnalyticGenerator, CfResult
from cfx.errors import InputError, ResourceError
from cfx.targets import SphereTarget

SIGMOID_SLOPE = 0.25


@dataclass(frozen=True)
class GridSpec:
    epsilon: float
    dim: int

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise InputError("epsilon must lie in (0, 1)")
        if self.dim < 1:
            raise InputError("dimension must be >= 1")
        if abs(self.per_axis * self.epsilon - 1.0) > 1e-9:
            raise InputError("1/epsilon must be an integer so cells tile the cube")

    @property
    def per_axis(self):
        return int(round(1.0 / self.epsilon))

    @property
    def shape(self):
        return (self.per_axis,) * self.dim

    @property
    def n_cells(self):
        return self.per_axis ** self.dim


def find_boundary_cells(m, grid, max_vertices=2_000_000, max_dim=3):
    """Sorted flat indices of cells whose 2^d corner classes are not all equal."""
    n_vertices = (grid.per_axis + 1) ** grid.dim
    if grid.dim > max_dim or n_vertices > max_vertices:
        raise ResourceError(f"exhaustive grid with {n_vertices} vertices in d={grid.dim} "
                            "exceeds the budget")
    axis = np.linspace(0.0, 1.0, grid.per_axis + 1)
    mesh = np.stack(np.meshgrid(*([axis] * grid.dim), indexing="ij"), axis=-1)
    classes = np.asarray(m.predict_class(mesh.reshape(-1, grid.dim))).reshape((grid.per_axis + 1,) * grid.dim)
    lo = np.full(grid.shape, 2)
    hi = np.full(grid.shape, -1)
    for corner in itertools.product((0, 1), repeat=grid.dim):
        sl = tuple(slice(c, c + grid.per_axis) for c in corner)
        lo = np.minimum(lo, classes[sl])
        hi = np.maximum(hi, classes[sl])
    return np.flatnonzero((hi != lo).ravel())


def assign_cells(points, grid, boundary_cells, tol=1e-6):
    """Boundary cell (lowest index) whose closed box, padded by ``tol``, holds each point.

    Returns -1 for points not in any boundary cell.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    member = np.zeros(grid.n_cells, dtype=bool)
    member[np.asarray(boundary_cells, dtype=int)] = True
    best = np.full(len(points), grid.n_cells, dtype=np.int64)
    for signs in itertools.product((-1.0, 1.0), repeat=grid.dim):
        multi = np.floor((points + np.asarray(signs) * tol) / grid.epsilon).astype(np.int64)
        multi = np.clip(multi, 0, grid.per_axis - 1)
        flat = np.ravel_multi_index(tuple(multi.T), grid.shape)
        best = np.where(member[flat], np.minimum(best, flat), best)
    return np.where(best == grid.n_cells, -1, best)


def _cf_point(cf_gen, m, x):
    res = cf_gen(m, x)
    if isinstance(res, CfResult):
        return res.w if res.converged else None
    return res


@dataclass
class VolumeEstimate:
    cells: np.ndarray
    v_estimates: np.ndarray
    rejected_fraction: float
    unassigned_fraction: float
    samples: int
    degenerate: bool = False

    @property
    def v_star(self):
        return float(self.v_estimates.min()) if len(self.v_estimates) else 0.0


def estimate_inverse_region_volumes(m, cf_gen, grid, samples=10_000, seed=0, boundary_cells=None):
    """Brute-force inverse-region volumes: fraction of uniform samples whose
    counterfactual lands in each boundary cell."""
    cells = find_boundary_cells(m, grid) if boundary_cells is None else np.asarray(boundary_cells)
    rng = np.random.default_rng(seed)
    X = rng.random((samples, grid.dim))
    rejected = np.flatnonzero(np.asarray(m.predict_class(X)) == 0)
    counts = np.zeros(len(cells))
    unassigned = 0
    if len(rejected):
        cfs = [_cf_point(cf_gen, m, X[i]) for i in rejected]
        ok = [w for w in cfs if w is not None]
        unassigned += len(cfs) - len(ok)
        if ok:
            hit = assign_cells(np.array(ok), grid, cells)
            unassigned += int(np.sum(hit < 0))
            pos = np.searchsorted(cells, hit[hit >= 0])
            np.add.at(counts, pos, 1)
    return VolumeEstimate(cells, counts / samples, len(rejected) / samples,
                          unassigned / samples, samples, degenerate=len(rejected) == 0)


def coverage_bound(k_eps, v_star, n):
    return 1.0 - k_eps * (1.0 - v_star) ** n


@dataclass
class CoverageReport:
    n: int
    epsilon: float
    k_eps: int
    v_estimates: np.ndarray
    v_star: float
    empirical_success: float
    trials: int
    bound: float
    std_error: float
    degenerate: bool = False

    def row(self):
        return {"n": self.n, "epsilon": self.epsilon, "k_eps": self.k_eps, "v_star": self.v_star,
                "bound": self.bound, "empirical_success": self.empirical_success}


def _binomial_se(successes, trials):
    # add-one smoothing keeps the error nonzero at 0 or `trials` successes
    p = (successes + 1.0) / (trials + 2.0)
    return math.sqrt(p * (1.0 - p) / trials)


def coverage_curve(m, cf_gen, grid, ns, trials=200, seed=0, volume_samples=10_000):
    """Coverage success for several query counts, coupled through nested query sets.

    Trial ``t`` draws ``max(ns)`` uniform queries once; the run with ``n``
    queries uses its first ``n``, so success is nondecreasing in ``n``.
    """
    ns = [int(n) for n in ns]
    if min(ns) < 0 or trials < 1:
        raise InputError("query counts must be >= 0 and trials >= 1")
    cells = find_boundary_cells(m, grid)
    vol = estimate_inverse_region_volumes(m, cf_gen, grid, volume_samples, seed, cells)
    rng = np.random.default_rng([seed, 1])
    n_max = max(ns)
    wins = np.zeros(len(ns))
    for _ in range(trials):
        X = rng.random((n_max, grid.dim))
        first_hit = np.full(len(cells), np.inf)
        for i in np.flatnonzero(np.asarray(m.predict_class(X)) == 0) if n_max else []:
            w = _cf_point(cf_gen, m, X[i])
            if w is None:
                continue
            c = assign_cells(w, grid, cells)[0]
            if c >= 0:
                j = np.searchsorted(cells, c)
                first_hit[j] = min(first_hit[j], i)
        covered_by = first_hit.max() if len(cells) else -1
        wins += np.array([covered_by < n for n in ns])
    out = []
    for n, w in zip(ns, wins):
        out.append(CoverageReport(n, grid.epsilon, len(cells), vol.v_estimates, vol.v_star,
                                  w / trials, trials, coverage_bound(len(cells), vol.v_star, n),
                                  _binomial_se(w, trials), vol.degenerate))
    return out


def reconstruction_success_probability(m, cf_gen, grid, n, trials=200, seed=0, volume_samples=10_000):
    return coverage_curve(m, cf_gen, grid, [n], trials, seed, volume_samples)[0]


def linear_one_sided_probability(v, n):
    """Probability that ``n`` uniform queries include a rejected one: ``1 - (1 - v)^n``."""
    if not 0.0 <= v <= 1.0:
        raise InputError("volume must lie in [0, 1]")
    if n < 0:
        raise InputError("n must be >= 0")
    return 1.0 - (1.0 - v) ** n


def empirical_linear_reconstruction(target, n, trials=2000, seed=0, cf_gen=None):
    """Fraction of trials whose ``n`` uniform queries recover the linear boundary.

    A trial succeeds when its first rejected query yields the tangent
    halfspace whose normal matches the target's (to 1e-9).
    """
    cf_gen = cf_gen or AnalyticGenerator()
    unit = target.a / np.linalg.norm(target.a)
    rng = np.random.default_rng(seed)
    wins = 0
    for _ in range(trials):
        X = rng.random((n, target.input_dim))
        rejected = np.flatnonzero(np.asarray(target.predict_class(X)) == 0) if n else []
        if len(rejected) == 0:
            continue
        x = X[rejected[0]]
        w = _cf_point(cf_gen, target, x)
        if w is None:
            continue
        normal = (w - x) / np.linalg.norm(w - x)
        if np.allclose(normal, unit, atol=1e-9):
            wins += 1
    return wins / trials


@dataclass
class ConvergenceFit:
    dim: int
    ns: list
    mean_errors: np.ndarray
    trial_errors: np.ndarray
    slope: float
    intercept: float
    theoretical_slope: float
    flagged: bool = False

    def rows(self):
        for n, e in zip(self.ns, self.mean_errors):
            yield {"d": self.dim, "n": n, "error": float(e), "log_n": math.log(n),
                   "log_error": math.log(e) if e > 0 else float("-inf")}


def polytope_error_curve(target, queries, reference, cf_gen=None, chunk=10_000):
    """Disagreement rate of the polytope built from each prefix of ``queries``.

    Returns an array aligned with ``range(len(queries) + 1)``.
    """
    cf_gen = cf_gen or AnalyticGenerator()
    queries = np.asarray(queries, dtype=float)
    rejected = np.flatnonzero(np.asarray(target.predict_class(queries)) == 0)
    pairs, origin = [], []
    for i in rejected:
        w = _cf_point(cf_gen, target, queries[i])
        if w is not None:
            pairs.append((queries[i], w))
            origin.append(i)
    model = polytope_from_pairs(target.input_dim, pairs)
    origin = np.array(origin, dtype=float)
    truth = np.asarray(target.predict_class(reference))
    # query index of the first halfspace each reference point violates
    first = np.full(len(reference), np.inf)
    if len(model):
        keep = np.ones(len(origin), dtype=bool)
        if model.skipped:
            keep = np.array([np.linalg.norm(w - x) >= 1e-12 for x, w in pairs])
        origin = origin[keep]
        for s in range(0, len(reference), chunk):
            viol = model.margins(reference[s:s + chunk]) < 0
            any_v = viol.any(axis=1)
            idx = np.argmax(viol, axis=1)
            first[s:s + chunk] = np.where(any_v, origin[idx], np.inf)
    n_q = len(queries)
    errors = np.empty(n_q + 1)
    for n in range(n_q + 1):
        pred = first >= n
        errors[n] = np.mean(pred != (truth == 1))
    return errors


def fit_loglog(ns, errors):
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(np.log(ns[ok]), np.log(errors[ok]), 1)
    return float(slope), float(intercept)


def theorem1_convergence(d, ns=(25, 50, 100, 200, 400), trials=20, mc_samples=100_000, seed=0):
    """Polytope approximation error on the spherical benchmark versus query count."""
    if d < 2:
        raise InputError("dimension must be >= 2")
    ns = sorted(int(n) for n in ns)
    target = SphereTarget.quadrant(d)
    errs = np.empty((trials, len(ns)))
    for t in range(trials):
        rng = np.random.default_rng([seed, d, t])
        queries = rng.random((ns[-1], d))
        reference = rng.random((mc_samples, d))
        curve = polytope_error_curve(target, queries, reference)
        errs[t] = curve[ns]
    mean = errs.mean(axis=0)
    slope, intercept = fit_loglog(ns, mean)
    return ConvergenceFit(d, ns, mean, errs, slope, intercept, -2.0 / (d - 1),
                          flagged=bool(np.any(mean <= 0)))


def logit_lipschitz(model):
    if isinstance(model, nn.DenseNetwork):
        return nn.lipschitz_upper_bound(model)
    return model.logit_lipschitz()


def sample_boundary_points(m, n, seed=0, pool_size=20_000, iterations=60):
    """Points on the decision boundary by bisection between opposite-class uniform samples.

    Each returned point is on the favorable side within ``2**-iterations`` of the boundary.
    """
    rng = np.random.default_rng(seed)
    d = m.input_dim
    pool = rng.random((pool_size, d))
    cls = np.asarray(m.predict_class(pool))
    neg, pos = pool[cls == 0], pool[cls == 1]
    if len(neg) == 0 or len(pos) == 0:
        raise InputError("model predicts a single class on the unit cube")
    lo = neg[rng.integers(len(neg), size=n)]
    hi = pos[rng.integers(len(pos), size=n)]
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fav = np.asarray(m.predict_class(mid)) == 1
        hi = np.where(fav[:, None], mid, hi)
        lo = np.where(fav[:, None], lo, mid)
    return hi


@dataclass
class ClampDiagnostic:
    delta: float
    mu: float
    gamma: float
    deviations: np.ndarray
    nearest_distance: np.ndarray
    nearest_gap: np.ndarray
    bound: float
    dim: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def max_deviation(self):
        return float(self.deviations.max())

    @property
    def holds(self):
        """Global form: max deviation <= gamma * delta + mu."""
        return self.max_deviation <= self.bound

    @property
    def pointwise_slack(self):
        return self.gamma * self.nearest_distance + self.nearest_gap - self.deviations

    @property
    def pointwise_holds(self):
        """Per point: deviation <= gamma * dist(nearest cf) + gap at that cf."""
        return bool(np.all(self.pointwise_slack >= -1e-12))

    def summary(self):
        return {"delta": self.delta, "mu": self.mu, "gamma": self.gamma,
                "max_deviation": self.max_deviation, "bound": self.bound,
                "holds": self.holds, "pointwise_holds": self.pointwise_holds,
                "n_boundary": int(len(self.deviations))}


def clamp_bound_diagnostic(m, m_tilde, cf_points, boundary_samples):
    """Check ``|m~(x) - m(x)| <= Gamma * delta + mu`` over boundary samples.

    ``delta`` is the covering radius of the counterfactuals over the samples,
    ``mu`` the largest output gap at a counterfactual and ``Gamma`` the sum of
    both models' logit Lipschitz bounds times the sigmoid slope bound 1/4.
    """
    cf = np.atleast_2d(np.asarray(cf_points, dtype=float))
    xs = np.atleast_2d(np.asarray(boundary_samples, dtype=float))
    if cf.size == 0:
        raise InputError("no counterfactual points")
    if xs.size == 0:
        raise InputError("no boundary samples")
    dist, nearest = cKDTree(cf).query(xs)
    cf_gap = np.abs(np.asarray(m_tilde.predict_proba(cf)) - np.asarray(m.predict_proba(cf)))
    dev = np.abs(np.asarray(m_tilde.predict_proba(xs)) - np.asarray(m.predict_proba(xs)))
    gamma = SIGMOID_SLOPE * (logit_lipschitz(m) + logit_lipschitz(m_tilde))
    delta = float(dist.max())
    mu = float(cf_gap.max())
    return ClampDiagnostic(delta, mu, gamma, dev, dist, cf_gap[nearest], gamma * delta + mu, xs.shape[1])
