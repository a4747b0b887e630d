"""Model reconstruction from one-sided counterfactuals.

* Baseline: counterfactuals join the training set as ordinary class-1 points.
* Counterfactual clamping: counterfactuals are labelled 0.5 and trained with
  the clamping loss, which only pushes the surrogate output up to ``k``.
* Polytope: each (query, closest counterfactual) pair yields the tangent
  halfspace at the counterfactual; their intersection circumscribes a convex
  favorable region.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from cfx import nn
from cfx.errors import FormatError, InputError
from cfx.losses import CF_LABEL, LossKind


@dataclass(frozen=True, eq=False)
class LabeledPoint:
    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if np.any(x < 0) or np.any(x > 1):
            raise InputError("labelled points must lie in the unit cube")
        if self.y not in (0, 0.5, 1):
            raise InputError(f"label must be 0, 0.5 or 1, got {self.y}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))

    @property
    def is_counterfactual(self):
        return self.y == CF_LABEL


def _check_queries(queries):
    q = np.asarray(queries, dtype=float)
    if q.ndim != 2:
        raise InputError("queries must be a 2-D array of points")
    if np.any(q < 0) or np.any(q > 1):
        raise InputError("queries must lie in the unit cube")
    return q


def attack_set_from_responses(queries, responses, clamp_mode=True):
    cf_label = CF_LABEL if clamp_mode else 1.0
    out = []
    for x, resp in zip(queries, responses):
        out.append(LabeledPoint(x, resp.label))
        if resp.counterfactual is not None:
            out.append(LabeledPoint(resp.counterfactual, cf_label))
    return out


def build_attack_set(oracle, queries, clamp_mode=True):
    """Query every point; add each converged counterfactual labelled 0.5 (clamp) or 1."""
    queries = _check_queries(queries)
    return attack_set_from_responses(queries, oracle.batch_query(queries), clamp_mode)


def as_baseline(attack_set):
    """Relabel clamped counterfactuals as ordinary class-1 points."""
    return [LabeledPoint(p.x, 1.0) if p.is_counterfactual else p for p in attack_set]


def train_surrogate(attack_set, arch, cfg=nn.TrainingConfig(), loss=LossKind.cca()):
    return nn.train(nn.init_network(arch), attack_set, cfg, loss)


def cca_attack(oracle, queries, surrogate_arch, cfg=nn.TrainingConfig(), k=0.5):
    attack_set = build_attack_set(oracle, queries, clamp_mode=True)
    return train_surrogate(attack_set, surrogate_arch, cfg, LossKind.cca(k))


def baseline_attack(oracle, queries, surrogate_arch, cfg=nn.TrainingConfig()):
    attack_set = build_attack_set(oracle, queries, clamp_mode=False)
    return train_surrogate(attack_set, surrogate_arch, cfg, LossKind.baseline())


@dataclass(eq=False)
class HalfspaceModel:
    """Intersection of halfspaces ``normal . (z - anchor) >= 0``.

    ``skipped`` counts degenerate query/counterfactual pairs that were ignored.
    """

    input_dim: int
    normals: np.ndarray = None
    anchors: np.ndarray = None
    skipped: int = 0
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.input_dim
        self.normals = np.zeros((0, d)) if self.normals is None else np.asarray(self.normals, dtype=float).reshape(-1, d)
        self.anchors = np.zeros((0, d)) if self.anchors is None else np.asarray(self.anchors, dtype=float).reshape(-1, d)
        if len(self.normals) != len(self.anchors):
            raise InputError("normals and anchors differ in count")
        if len(self.normals) and not np.allclose(np.linalg.norm(self.normals, axis=1), 1.0, atol=1e-9):
            raise InputError("halfspace normals must be unit vectors")
        self.offsets = np.einsum("ij,ij->i", self.normals, self.anchors)

    def __len__(self):
        return len(self.normals)

    def add(self, normal, anchor):
        self.normals = np.vstack([self.normals, np.asarray(normal, dtype=float)[None]])
        self.anchors = np.vstack([self.anchors, np.asarray(anchor, dtype=float)[None]])
        self.offsets = np.einsum("ij,ij->i", self.normals, self.anchors)

    def margins(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.normals.T - self.offsets

    def predict_class(self, x, chunk=20_000):
        x = np.asarray(x, dtype=float)
        if len(self) == 0:
            return 1 if x.ndim == 1 else np.ones(len(x), dtype=int)
        if x.ndim == 1:
            return int(np.all(self.margins(x)[0] >= 0))
        out = np.empty(len(x), dtype=int)
        for i in range(0, len(x), chunk):
            out[i:i + chunk] = np.all(self.margins(x[i:i + chunk]) >= 0, axis=1)
        return out

    def to_dict(self):
        return {"input_dim": self.input_dim, "halfspaces": [{"normal": n.tolist(), "anchor": a.tolist()}
                               for n, a in zip(self.normals, self.anchors)]}

    @classmethod
    def from_dict(cls, payload, input_dim=None):
        try:
            hs = payload["halfspaces"]
            normals = [h["normal"] for h in hs]
            anchors = [h["anchor"] for h in hs]
            d = input_dim if input_dim is not None else payload.get("input_dim")
            if d is None and normals:
                d = len(normals[0])
            if d is None:
                raise FormatError("empty halfspace model needs an explicit input_dim")
            return cls(d, np.array(normals, dtype=float).reshape(-1, d),
                       np.array(anchors, dtype=float).reshape(-1, d))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"malformed halfspace payload: {exc}") from exc

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def polytope_predict(model, x):
    return model.predict_class(x)


def polytope_from_pairs(input_dim, pairs, min_distance=1e-12):
    """Tangent halfspaces from (rejected query, counterfactual) pairs."""
    normals, anchors, skipped = [], [], 0
    for x, w in pairs:
        diff = np.asarray(w, dtype=float) - np.asarray(x, dtype=float)
        dist = np.linalg.norm(diff)
        if dist < min_distance:
            skipped += 1
            continue
        normals.append(diff / dist)
        anchors.append(np.asarray(w, dtype=float))
    model = HalfspaceModel(input_dim, np.array(normals).reshape(-1, input_dim),
                           np.array(anchors).reshape(-1, input_dim))
    model.skipped = skipped
    return model


def polytope_from_responses(input_dim, queries, responses):
    pairs = [(x, r.counterfactual) for x, r in zip(queries, responses) if r.counterfactual is not None]
    return polytope_from_pairs(input_dim, pairs)


def polytope_attack(oracle, queries):
    """Circumscribing polytope from closest counterfactuals of rejected queries."""
    queries = _check_queries(queries)
    return polytope_from_responses(oracle.input_dim, queries, oracle.batch_query(queries))
