"""Activation sharpness, Rademacher complexity estimates and risk-bound calculators.

Every bound is returned with its hidden constant set to 1, so only ratios and
growth exponents of these numbers are meaningful.  Logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nets import ActivationSpec, FunctionClassSpec, InputL0, JointL1
from .optim import project_l1_ball

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# --- activation sharpness ------------------------------------------------------------

def _step_gap(activation: ActivationSpec, eta: float, eps):
    """``sup_{|x| > eps} |sigma(eta x) - 1{x > 0}|``; closed form for the logistic."""
    return 1.0 / (1.0 + np.exp(np.minimum(eta * np.asarray(eps, dtype=float), 700.0)))


def _step_gap_sampled(activation: ActivationSpec, eta: float, eps, points: int = 2000):
    """Same supremum by dense sampling of ``|x|`` in ``(eps, 50/eta]``."""
    out = []
    for e in np.atleast_1d(eps):
        hi = max(50.0 / eta, 2.0 * e)
        x = np.linspace(e, hi, points + 1)[1:]
        gap = np.maximum(1.0 - activation(eta * x), activation(-eta * x))
        # The supremum over the open set is the limit at x -> eps.
        gap_edge = max(1.0 - activation(eta * e), activation(-eta * e))
        out.append(max(gap.max(), gap_edge))
    return np.array(out) if np.ndim(eps) else out[0]


def _golden_min(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200):
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def delta_eta(activation: ActivationSpec, eta: float, grid_points: int = 10_000,
              sampled: bool = False) -> float:
    """Approximation deficit of ``sigma(eta x)`` relative to the unit step.

    Minimizes ``2 eps + sup_{|x|>eps} |sigma(eta x) - 1{x>0}|`` over
    ``eps in (0, 1/2)`` on a uniform interior grid, then refines the best cell
    by golden-section search.  When the infimum sits at the open end
    ``eps -> 0`` (``eta <= 8`` for the logistic) the result is the value at
    the refined point just inside the interval, marginally above 1/2.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    gap = _step_gap_sampled if sampled else _step_gap

    def objective(e):
        return 2.0 * e + gap(activation, eta, e)

    grid = np.linspace(0.0, 0.5, grid_points + 2)[1:-1]
    values = objective(grid)
    i = int(np.argmin(values))
    lo = grid[i - 1] if i > 0 else 0.0
    hi = grid[i + 1] if i + 1 < len(grid) else 0.5
    _, refined = _golden_min(lambda e: float(objective(e)), lo, hi)
    return float(min(values[i], refined))


# --- Rademacher complexity -------------------------------------------------------------

@dataclass(frozen=True)
class InnerConfig:
    """Settings for the single-neuron maximization inside each Rademacher trial."""

    restarts: int = 20
    iters: int = 500
    step_size: float = 1.0
    init_scale: float = 2.0
    chunk: int = 0  # trials per batch; 0 picks a size that keeps buffers small

    def chunk_for(self, n: int) -> int:
        if self.chunk:
            return self.chunk
        return max(1, min(16, 2 ** 17 // max(1, self.restarts * n)))


@dataclass(frozen=True, eq=False)
class RademacherEstimate:
    mean: float
    std_error: float
    trials: int
    inner_restarts: int
    values: np.ndarray = field(repr=False, default=None)


def _single_neuron_sup(X, signs, w, b, spec: FunctionClassSpec, inner: InnerConfig):
    """Best ``|mean_i xi_i sigma(w.x_i + b)|`` found by normalized gradient ascent.

    ``signs`` has shape (T, n); ``w`` (T, R, d) and ``b`` (T, R) are starting
    points.  Returns the best value per trial, never below the starting values.
    """
    n = X.shape[0]
    act = spec.activation
    mask = spec.support_mask().astype(float) if isinstance(spec.regime, InputL0) else None
    eta = spec.regime.eta if isinstance(spec.regime, JointL1) else None

    def constrain(w, b):
        if mask is not None:
            w = w * mask
        if eta is not None:
            T, R, d = w.shape
            wb = project_l1_ball(np.concatenate([w, b[..., None]], -1).reshape(-1, d + 1), eta)
            wb = wb.reshape(T, R, d + 1)
            w, b = wb[..., :d], wb[..., d]
        return w, b

    w, b = constrain(w, b)
    T, R = b.shape
    d = X.shape[1]
    X1 = np.concatenate([X, np.ones((n, 1))], axis=1)       # bias as an extra column
    sig = signs[:, :, None] / n                             # (T, n, 1)
    S = np.empty((T, R, n))
    G = np.empty((T, R, n))
    best = np.zeros((T, R))
    for t in range(inner.iters + 1):
        np.matmul(w, X.T, out=S)
        S += b[..., None]
        act(S, out=S)
        u = np.matmul(S, sig)[..., 0]                       # (T, R)
        np.maximum(best, np.abs(u), out=best)
        if t == inner.iters:
            break
        # d|u|/dz_i = sign(u) xi_i sigma'(z_i) / n, with sigma' = S (1 - S).
        np.subtract(1.0, S, out=G)
        G *= S
        G *= signs[:, None, :]
        gwb = np.matmul(G, X1)                              # (T, R, d + 1)
        gwb *= (np.sign(u) / n)[..., None]
        norm = np.sqrt((gwb ** 2).sum(-1))
        scale = inner.step_size / math.sqrt(t + 1) / np.maximum(norm, 1e-300)
        gwb *= scale[..., None]
        w, b = constrain(w + gwb[..., :d], b + gwb[..., d])
    return best.max(axis=1)


def rademacher_mc(spec: FunctionClassSpec, X, trials: int = 200, inner: InnerConfig = None,
                  seed: int = 0) -> RademacherEstimate:
    """Monte Carlo estimate of ``E sup_{f in class} |n^-1 sum_i xi_i f(x_i)|``.

    For fixed signs the supremum over the output-L1 ball is ``V`` times the
    supremum over a single neuron (the constant function counts as one), so
    each trial solves a single-neuron problem.  The inner maximum is found by
    local search and is a lower bound on the true supremum.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    inner = inner or InnerConfig()
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if d != spec.d:
        raise ValueError(f"sample has d={d}, class has d={spec.d}")
    values = np.zeros(trials)
    if spec.V > 0:
        streams = np.random.SeedSequence(seed).spawn(trials)
        size = inner.chunk_for(n)
        for start in range(0, trials, size):
            chunk = streams[start:start + size]
            signs = np.empty((len(chunk), n))
            w = np.empty((len(chunk), inner.restarts, d))
            b = np.empty((len(chunk), inner.restarts))
            for i, ss in enumerate(chunk):
                rng = np.random.default_rng(ss)
                signs[i] = rng.choice([-1.0, 1.0], size=n)
                w[i] = rng.uniform(-inner.init_scale, inner.init_scale, size=(inner.restarts, d))
                b[i] = rng.uniform(-inner.init_scale, inner.init_scale, size=inner.restarts)
            neuron = _single_neuron_sup(X, signs, w, b, spec, inner)
            constant = np.abs(signs.mean(axis=1))
            values[start:start + len(chunk)] = np.maximum(neuron, constant)
    mean = spec.V * float(values.mean())
    sd = spec.V * float(values.std(ddof=1)) if trials > 1 else 0.0
    return RademacherEstimate(mean, sd / math.sqrt(trials), trials, inner.restarts,
                              spec.V * values)


def rademacher_norm_bound(neuron_norms, V: float, n: int) -> float:
    """``V * sqrt(log n / n) * max_j (||w_j||_1 + |b_j|)``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    norms = np.atleast_1d(np.asarray(neuron_norms, dtype=float))
    biggest = float(norms.max()) if norms.size else 0.0
    return V * math.sqrt(math.log(n) / n) * biggest


# --- closed-form bounds ------------------------------------------------------------

@dataclass(frozen=True)
class BoundInputs:
    C: float = 0.0
    V: float = 0.0
    eta: float = 1.0
    tau: float = 0.0
    r: int = 1
    d: int = 1
    k: int = 1
    n: int = 2

    def __post_init__(self):
        for name in ("C", "V", "eta", "tau"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        for name in ("r", "d", "k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.n < 2:
            raise ValueError("n must be >= 2")


def bound_thm1_approx(inputs: BoundInputs, delta: float) -> float:
    """Approximation error ``2C (1/sqrt(r) + delta)``."""
    return 2.0 * inputs.C * (1.0 / math.sqrt(inputs.r) + delta)


def bound_thm2_choice_r(inputs: BoundInputs) -> int:
    """Neuron count ``V sqrt(n / (d log n))`` rounded half up, at least 1."""
    raw = inputs.V * math.sqrt(inputs.n / (inputs.d * math.log(inputs.n)))
    return max(1, int(math.floor(raw + 0.5)))


def bound_thm3_risk(inputs: BoundInputs, delta: float) -> float:
    c = inputs
    return ((1.0 / math.sqrt(c.r) + delta) * c.C
            + (c.V * math.sqrt(c.d * math.log(c.n)) + c.tau) / math.sqrt(c.n))


def bound_thm4_minimax(inputs: BoundInputs) -> float:
    return inputs.V * math.sqrt(inputs.d / inputs.n)


def bound_prop1_sparse(inputs: BoundInputs) -> float:
    return math.sqrt(inputs.k * math.log(inputs.d * inputs.n) / inputs.n)


def bound_thm5_risk(inputs: BoundInputs, delta: float) -> float:
    c = inputs
    return c.C * (1.0 / math.sqrt(c.r) + delta) + (c.V * c.eta + c.tau) / math.sqrt(c.n)


def bound_thm5_eta_choice(n: float) -> float:
    """Input-layer budget ``(n log^2 n)^(1/3)``."""
    return (n * math.log(n) ** 2) ** (1.0 / 3.0)
