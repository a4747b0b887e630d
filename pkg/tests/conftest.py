import math

import numpy as np
import pytest

from cfx import data, nn
from cfx.attacks import build_attack_set, train_surrogate
from cfx.counterfactuals import MccfGenerator
from cfx.losses import LossKind
from cfx.oracle import TargetOracle


def scalar_bce(p, y):
    # independent scalar reference: plain math.log, clipped like the library
    p = min(max(p, 1e-7), 1 - 1e-7)
    out = 0.0
    if y > 0:
        out -= y * math.log(p)
    if y < 1:
        out -= (1 - y) * math.log(1 - p)
    return out


def scalar_entropy(q):
    return sum(-t * math.log(t) for t in (q, 1 - q) if t > 0)


def central_difference(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_network(rng, d=None, depth=None):
    d = d or int(rng.integers(1, 11))
    depth = depth or int(rng.integers(1, 4))
    hidden = tuple(int(h) for h in rng.integers(1, 8, size=depth))
    net = nn.init_network(nn.NetworkArchitecture(d, hidden, int(rng.integers(0, 2**31))))
    biases = tuple(rng.normal(0, 0.3, size=b.shape) for b in net.biases)
    return nn.DenseNetwork(net.architecture, net.weights, biases)


def fd_network_error(net, x, h=1e-5):
    grads, dx = nn.backward(net, x)
    fd_x = central_difference(lambda z: nn.forward(net, z), x, h)
    errs = [np.max(np.abs(dx - fd_x)) / max(np.max(np.abs(fd_x)), 1e-8)]
    for li, (dw, db) in enumerate(grads):
        def f_w(w, li=li):
            ws = list(net.weights)
            ws[li] = w
            return nn.forward(nn.DenseNetwork(net.architecture, tuple(ws), net.biases), x)

        def f_b(b, li=li):
            bs = list(net.biases)
            bs[li] = b
            return nn.forward(nn.DenseNetwork(net.architecture, net.weights, tuple(bs)), x)

        for analytic, fd in ((dw, central_difference(f_w, net.weights[li], h)),
                             (db, central_difference(f_b, net.biases[li], h))):
            scale = max(np.max(np.abs(fd)), 1e-8)
            errs.append(np.max(np.abs(analytic - fd)) / scale)
    return max(errs)


def safe_point(net, rng):
    # keep every pre-activation at least 1e-3 away from the ReLU kink
    for _ in range(100):
        x = rng.random(net.input_dim)
        a, ok = x, True
        for w, b in zip(net.weights[:-1], net.biases[:-1]):
            z = a @ w + b
            ok &= bool(np.all(np.abs(z) > 1e-3))
            a = np.maximum(z, 0)
        if ok:
            return x
    return None


@pytest.fixture(scope="session")
def moons():
    return data.make_two_moons(1000, 0.1, seed=0)


@pytest.fixture(scope="session")
def moons_models(moons):
    """A trained two-moons target, its CCA surrogate and the attack set used."""
    train, _, attack = data.split(moons, data.SplitSpec(0.5, 0.25, 0.25, seed=0))
    cfg = nn.TrainingConfig(epochs=100, shuffle_seed=0)
    target = nn.train(nn.init_network(nn.NetworkArchitecture(2, (10, 20, 20, 10), 0)),
                      (train.features, train.labels.astype(float)), cfg)
    queries = attack.features[np.random.default_rng(0).choice(len(attack), 200, replace=False)]
    attack_set = build_attack_set(TargetOracle(target, MccfGenerator()), queries, clamp_mode=True)
    surrogate = train_surrogate(attack_set, nn.NetworkArchitecture(2, (10, 20, 20), 1), cfg,
                                LossKind.cca(0.5))
    return target, surrogate, attack_set


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary prints them all."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
