"""Fidelity, reference sets, prediction histograms and ensemble statistics."""

from dataclasses import dataclass

import numpy as np

from cfx.errors import InputError

DEFAULT_UNIFORM_SIZE = 10_000


@dataclass(frozen=True)
class FidelityResult:
    fidelity: float
    reference_kind: str
    reference_size: int


def fidelity(m, m_tilde, reference, reference_kind="uniform"):
    """Fraction of reference points on which both models predict the same class.

    Either model may be anything with a vectorised ``predict_class``
    (networks, analytic targets, halfspace models).
    """
    ref = np.asarray(reference, dtype=float)
    if ref.ndim != 2 or len(ref) == 0:
        raise InputError("reference set must be a nonempty 2-D array")
    agree = np.asarray(m.predict_class(ref)) == np.asarray(m_tilde.predict_class(ref))
    return FidelityResult(float(np.mean(agree)), reference_kind, len(ref))


def uniform_reference(d, size=DEFAULT_UNIFORM_SIZE, seed=0):
    if size < 1 or d < 1:
        raise InputError("size and dimension must be >= 1")
    return np.random.default_rng(seed).random((size, d))


def prediction_histogram(m, points, bins=50):
    """Counts of output probabilities in ``bins`` equal-width bins over [0, 1].

    Bins are half-open ``[i/bins, (i+1)/bins)`` except the last, which is closed.
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        raise InputError("no points to histogram")
    counts, _ = np.histogram(np.atleast_1d(m.predict_proba(points)), bins=bins, range=(0.0, 1.0))
    return counts


@dataclass(frozen=True)
class EnsembleSummary:
    mean: float
    std: float
    count: int
    single: bool = False


def ensemble_summary(values):
    """Sample mean and (n-1)-denominator standard deviation."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise InputError("cannot summarise an empty ensemble")
    if v.size == 1:
        return EnsembleSummary(float(v[0]), 0.0, 1, single=True)
    return EnsembleSummary(float(np.mean(v)), float(np.std(v, ddof=1)), int(v.size))
