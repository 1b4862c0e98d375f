"""Independent reference computations used by several test modules."""

import math

import numpy as np

from l1net.nets import TwoLayerParams
from l1net.targets import Dataset


def kkt_projection(v, radius):
    """L1-ball projection by bisection on the soft-threshold level."""
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    lo, hi = 0.0, np.abs(v).max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(np.abs(v) - mid, 0).sum() > radius:
            lo = mid
        else:
            hi = mid
    return np.sign(v) * np.maximum(np.abs(v) - hi, 0)


def random_instance(rng, n=None, d=None, r=None):
    n = n or int(rng.integers(1, 11))
    d = d or int(rng.integers(1, 4))
    r = r or int(rng.integers(1, 4))
    params = TwoLayerParams(rng.normal(), rng.normal(size=r), rng.normal(size=(r, d)),
                            rng.normal(size=r))
    return params, Dataset(rng.normal(size=(n, d)), rng.normal(size=n))


def _loss(flat, r, d, data, loss):
    a0, a, W, b = flat[0], flat[1:1 + r], flat[1 + r:1 + r + r * d].reshape(r, d), flat[-r:]
    resid = a0 + (1 / (1 + np.exp(-(data.X @ W.T + b)))) @ a - data.y
    return np.mean(np.abs(resid)) if loss == "L1" else np.mean(resid ** 2)


def fd_gradient(params, data, h, loss="L2"):
    """Central finite differences written without the package's forward pass."""
    r, d = params.r, params.d
    flat = np.concatenate([[params.a0], params.a, params.W.ravel(), params.b])
    grad = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        grad[i] = (_loss(flat + e, r, d, data, loss) - _loss(flat - e, r, d, data, loss)) / (2 * h)
    return grad


def step_gap_brute(eta, eps, points=200_001):
    """sup over |z| >= eps of |sigma(eta z) - step(z)| by dense evaluation on [eps, 50/eta + eps]."""
    z = np.linspace(eps, eps + 60.0 / eta, points)
    return float(np.max(1.0 / (1.0 + np.exp(eta * z))))


def delta_brute(eta, eps_points=4000):
    """Dense double grid over the dead-zone width and the sup variable."""
    best = math.inf
    for eps in np.linspace(1e-6, 0.5, eps_points)[1:-1]:
        best = min(best, 2 * eps + step_gap_brute(eta, eps, 2001))
    return best
