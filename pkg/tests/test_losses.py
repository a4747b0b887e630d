import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfx.errors import InputError
from cfx.losses import (LossKind, bce, bce_grad, binary_entropy, cca_loss, cca_loss_grad,
                        logit_gradient, loss_values, soft_bce_ablation)
from conftest import scalar_bce, scalar_entropy

probs = st.floats(0.001, 0.999)
ks = st.floats(0.01, 1.0)


def test_bce_examples():
    assert bce(0.5, 0.5) == pytest.approx(math.log(2), abs=1e-12)
    assert bce(0.8, 1) == pytest.approx(0.2231435513, abs=1e-9)
    assert bce(0.8, 1) == pytest.approx(scalar_bce(0.8, 1), abs=1e-12)


def test_bce_clips_extremes():
    assert np.isfinite(bce(0.0, 1)) and np.isfinite(bce(1.0, 0))
    assert bce(0.0, 1) == pytest.approx(-math.log(1e-7))


def test_bce_equals_entropy_on_grid():
    grid = np.linspace(0.005, 0.995, 100)
    assert np.max(np.abs(bce(grid, grid) - binary_entropy(grid))) <= 1e-12


def test_binary_entropy_examples():
    assert binary_entropy(0.5) == pytest.approx(math.log(2), abs=1e-15)
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.25) == pytest.approx(0.5623351446, abs=1e-9)
    assert binary_entropy(0.25) == pytest.approx(scalar_entropy(0.25), abs=1e-14)


def test_binary_entropy_rejects_outside_unit_interval():
    with pytest.raises(InputError):
        binary_entropy(1.5)


def test_cca_loss_examples():
    assert cca_loss(0.5, 0.5, 0.5) == 0.0
    assert cca_loss(0.8, 0.5, 0.5) == 0.0
    assert cca_loss(0.25, 0.5, 0.5) == pytest.approx(0.1438410362, abs=1e-9)
    oracle = scalar_bce(0.25, 0.5) - scalar_entropy(0.5)
    assert cca_loss(0.25, 0.5, 0.5) == pytest.approx(oracle, abs=1e-12)
    assert cca_loss(0.8, 0.5, 1.0) == pytest.approx(-math.log(0.8), abs=1e-12)


def test_cca_loss_rejects_bad_labels_and_k():
    with pytest.raises(InputError):
        cca_loss(0.5, 0.3)
    with pytest.raises(InputError):
        cca_loss(0.5, 0.5, k=0.0)
    with pytest.raises(InputError):
        cca_loss(0.5, 0.5, k=1.2)


@given(probs, ks)
def test_cca_loss_nonnegative_and_flat_above_k(p, k):
    assert cca_loss(p, 0.5, k) >= 0.0
    if p >= k:
        assert cca_loss(p, 0.5, k) == 0.0
    for y in (0, 1):
        assert cca_loss(p, y, k) >= 0.0


@given(ks, st.lists(probs, min_size=2, max_size=10))
def test_cca_loss_nonincreasing_below_k(k, ps):
    ps = sorted(p for p in ps if p <= k)
    values = [cca_loss(p, 0.5, k) for p in ps]
    assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


@given(probs, st.sampled_from([0.0, 0.5, 1.0]))
def test_k_one_matches_baseline_labelling(p, y):
    expected = bce(p, 1.0) if y == 0.5 else bce(p, y)
    assert cca_loss(p, y, 1.0) == pytest.approx(expected, abs=1e-12)


def test_cca_grad_examples():
    assert cca_loss_grad(0.7, 0.5, 0.5) == 0.0
    assert cca_loss_grad(0.5, 0.5, 0.5) == 0.0
    assert cca_loss_grad(0.5, 1, 0.5) == pytest.approx(-2.0)


def _rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(1000):
        k = rng.uniform(0.05, 1.0)
        y = rng.choice([0.0, 0.5, 1.0])
        p = rng.uniform(0.01, 0.99)
        if abs(p - k) < 2 * h:
            continue
        fd = (cca_loss(p + h, y, k) - cca_loss(p - h, y, k)) / (2 * h)
        assert _rel_err(cca_loss_grad(p, y, k), fd) < 1e-5 or abs(fd) < 1e-9
        fd = (bce(p + h, y) - bce(p - h, y)) / (2 * h)
        assert _rel_err(bce_grad(p, y), fd) < 1e-5 or abs(fd) < 1e-9


def test_soft_bce_ablation():
    assert soft_bce_ablation(0.5, 0.5) == pytest.approx(math.log(2))
    assert soft_bce_ablation(0.8, 0.5) == pytest.approx(soft_bce_ablation(0.2, 0.5), abs=1e-12)
    assert soft_bce_ablation(0.9, 1) == pytest.approx(-math.log(0.9))


def test_loss_kind_validation():
    assert LossKind.baseline().k == 1.0
    assert LossKind.cca().k == 0.5
    with pytest.raises(InputError):
        LossKind("hinge")
    with pytest.raises(InputError):
        LossKind.cca(0.0)


def test_logit_gradient_matches_chain_rule():
    # d loss / d z = d loss / d p * p (1 - p), away from the clipping range
    rng = np.random.default_rng(1)
    p = rng.uniform(0.01, 0.99, 200)
    y = rng.choice([0.0, 0.5, 1.0], 200)
    for loss in (LossKind.cca(0.6), LossKind.baseline(), LossKind.soft_bce()):
        if loss.kind == "soft_bce_ablation":
            dp = bce_grad(p, y)
        else:
            dp = cca_loss_grad(p, y, loss.k)
        np.testing.assert_allclose(logit_gradient(p, y, loss), dp * p * (1 - p), atol=1e-12)
        assert loss_values(p, y, loss).shape == p.shape
