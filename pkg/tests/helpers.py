"""Shared numerical checks for the test suite."""

import numpy as np

from featalign import tinynet


def _pattern(net, X):
    return [z > 0 for z in tinynet.preactivations(net, X)]


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_errors(net, X, y, h=1e-6):
    """Relative error of analytic input and parameter gradients against central differences.

    Coordinates whose +/- h perturbation flips a ReLU are skipped, since the
    loss is not differentiable across the kink. Returns (input_err, param_err, skipped).
    """
    _, gX = tinynet.loss_and_input_grad(net, X, y)
    _, gw, gb = tinynet.loss_and_grads(net, X, y)
    base = _pattern(net, X)
    skipped = 0

    num_x, ana_x = [], []
    flat = X.reshape(-1)
    for k in range(flat.size):
        Xp, Xm = flat.copy(), flat.copy()
        Xp[k] += h
        Xm[k] -= h
        Xp, Xm = Xp.reshape(X.shape), Xm.reshape(X.shape)
        if not (_same_pattern(base, _pattern(net, Xp)) and _same_pattern(base, _pattern(net, Xm))):
            skipped += 1
            continue
        lp, _ = tinynet.loss_and_input_grad(net, Xp, y)
        lm, _ = tinynet.loss_and_input_grad(net, Xm, y)
        num_x.append((lp - lm) / (2 * h))
        ana_x.append(gX.reshape(-1)[k])

    num_p, ana_p = [], []
    for params, grads in ((net.weights, gw), (net.biases, gb)):
        for p, g in zip(params, grads):
            flat_p = p.reshape(-1)
            for k in range(flat_p.size):
                old = flat_p[k]
                flat_p[k] = old + h
                pat_p = _pattern(net, X)
                lp, _ = tinynet.loss_and_input_grad(net, X, y)
                flat_p[k] = old - h
                pat_m = _pattern(net, X)
                lm, _ = tinynet.loss_and_input_grad(net, X, y)
                flat_p[k] = old
                if not (_same_pattern(base, pat_p) and _same_pattern(base, pat_m)):
                    skipped += 1
                    continue
                num_p.append((lp - lm) / (2 * h))
                ana_p.append(g.reshape(-1)[k])

    def rel(a, n):
        a, n = np.asarray(a), np.asarray(n)
        return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12))

    return rel(ana_x, num_x), rel(ana_p, num_p), skipped


def random_small_net(seed):
    """A random 1- to 3-hidden-layer net with either head and random standardisation."""
    rng = np.random.default_rng(seed)
    shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 3)))
    hidden = tuple(int(h) for h in rng.integers(2, 8, size=rng.integers(1, 4)))
    k = int(rng.integers(2, 6))
    head = "softmax" if rng.random() < 0.7 else "sigmoid"
    center, scale = float(rng.uniform(0, 1)), float(rng.uniform(0.1, 2))
    arch = tinynet.mlp(shape, hidden, [f"c{i}" for i in range(k)], head, center, scale)
    net = tinynet.init(arch, seed)
    net.biases = [rng.normal(0, 0.1, size=b.shape) for b in net.biases]
    n = int(rng.integers(1, 6))
    X = rng.uniform(0, 1, size=(n, *shape))
    if head == "softmax":
        y = rng.integers(0, k, size=n)
    else:
        y = (rng.random((n, k)) < 0.5).astype(float)
    return net, X, y


# filled by test_acceptance.py, printed by conftest.pytest_terminal_summary
CRITERIA_LINES: list[str] = []
