"""Constrained empirical risk minimization for two-layer networks.

The estimator is approximated by projected subgradient descent with
best-iterate tracking over several restarts.  One restart always starts from
the zero network, and every restart's first iterate is a zero-output network,
so the reported objective never exceeds the loss of predicting zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nets import (ActivationSpec, DimensionMismatch, FunctionClassSpec, InputL0, JointL1,
                   TwoLayerParams, neuron_l1_norms, output_l1_norm)
from .targets import Dataset

log = logging.getLogger(__name__)

FEASIBILITY_SLACK = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "L1"
    max_iters: int = 2000
    schedule: str = "inv-sqrt"  # or "constant"
    step_size: float = 1.0
    init_scale: float = 1.0
    init_fan_in: bool = False
    restarts: int = 5
    seed: int = 0
    tolerance: float = 0.0
    patience: int = 100

    def __post_init__(self):
        if self.loss not in ("L1", "L2"):
            raise ValueError(f"loss must be L1 or L2, got {self.loss!r}")
        if self.schedule not in ("inv-sqrt", "constant"):
            raise ValueError(f"unknown step schedule {self.schedule!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.init_scale < 0 or self.tolerance < 0:
            raise ValueError("init_scale and tolerance must be nonnegative")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def step(self, t: int) -> float:
        """Step length at iteration ``t`` (1-based)."""
        if self.schedule == "constant":
            return self.step_size
        return self.step_size / np.sqrt(t)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    output_residual: float = 0.0
    neuron_residual: float = 0.0
    support_residual: float = 0.0

    @property
    def residual(self) -> float:
        return max(self.output_residual, self.neuron_residual, self.support_residual)


@dataclass(frozen=True, eq=False)
class TrainReport:
    best_params: TwoLayerParams
    best_objective: float
    objective_trace: np.ndarray = field(repr=False)
    iters_run: int
    constraint_residual: float
    failed: bool = False
    diagnostics: str = ""


# --- losses -----------------------------------------------------------------------

def _check_data(params: TwoLayerParams, data: Dataset):
    if data.n == 0:
        raise ValueError("empty dataset")
    if data.d != params.d:
        raise DimensionMismatch(f"dataset has d={data.d}, network has d={params.d}")


def empirical_loss(params: TwoLayerParams, activation: ActivationSpec, data: Dataset,
                   loss: str = "L1") -> float:
    _check_data(params, data)
    resid = params.a0 + activation(data.X @ params.W.T + params.b) @ params.a - data.y
    return float(np.mean(np.abs(resid)) if loss == "L1" else np.mean(resid ** 2))


def loss_subgradient(params: TwoLayerParams, activation: ActivationSpec, data: Dataset,
                     loss: str = "L1") -> TwoLayerParams:
    """Subgradient of the mean loss, returned in the parameter layout.

    For the L1 loss ``sign(0)`` is taken as 0.
    """
    _check_data(params, data)
    Z = data.X @ params.W.T + params.b                      # (n, r)
    S = activation(Z)
    resid = params.a0 + S @ params.a - data.y
    g = (np.sign(resid) if loss == "L1" else 2.0 * resid) / data.n
    H = activation.derivative(Z) * g[:, None] * params.a    # (n, r)
    return TwoLayerParams(g.sum(), S.T @ g, H.T @ data.X, H.sum(axis=0))


# --- proximal maps ----------------------------------------------------------------

def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{u : ||u||_1 <= radius}``.

    Sort-based threshold search; a 2-D input is projected row by row.  Points
    already inside the ball are returned unchanged.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return project_l1_ball(v[None, :], radius)[0]
    out = v.copy()
    if v.shape[-1] == 0:
        return out
    if radius == 0:
        return np.zeros_like(v)
    mag = np.abs(v)
    outside = mag.sum(axis=-1) > radius
    if not outside.any():
        return out
    u = mag[outside]
    m = u.shape[-1]
    s = -np.sort(-u, axis=-1)
    excess = np.cumsum(s, axis=-1) - radius
    j = np.arange(1, m + 1)
    # Last index where the sorted magnitude still exceeds the running threshold.
    rho = m - 1 - np.argmax((s * j > excess)[:, ::-1], axis=-1)
    theta = np.maximum(excess[np.arange(len(u)), rho] / (rho + 1), 0.0)
    shrunk = np.maximum(u - theta[:, None], 0.0)
    for _ in range(4):
        over = shrunk.sum(axis=-1) - radius
        if not (over > 0).any():
            break
        active = np.maximum((shrunk > 0).sum(axis=-1), 1)
        theta = theta + np.where(over > 0, over / active, 0.0)
        shrunk = np.maximum(u - theta[:, None], 0.0)
    out[outside] = np.sign(v[outside]) * shrunk
    return out


def soft_threshold(v, lam: float) -> np.ndarray:
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


# --- feasibility ------------------------------------------------------------------

def check_feasibility(params: TwoLayerParams, spec: FunctionClassSpec,
                      slack: float = FEASIBILITY_SLACK) -> FeasibilityReport:
    if params.d != spec.d:
        raise DimensionMismatch(f"params have d={params.d}, class has d={spec.d}")
    out_res = max(0.0, output_l1_norm(params) - spec.V)
    neuron_res = 0.0
    support_res = 0.0
    if isinstance(spec.regime, JointL1) and params.r:
        neuron_res = max(0.0, float(neuron_l1_norms(params).max()) - spec.regime.eta)
    if isinstance(spec.regime, InputL0) and params.r:
        off = params.W[:, ~spec.support_mask()]
        support_res = float(np.abs(off).max()) if off.size else 0.0
    feasible = out_res <= slack and neuron_res <= slack and support_res <= slack
    return FeasibilityReport(feasible, out_res, neuron_res, support_res)


# --- training ---------------------------------------------------------------------

def _project_batch(a0, a, W, b, spec: FunctionClassSpec, mask):
    ab = project_l1_ball(np.concatenate([a0[:, None], a], axis=1), spec.V)
    a0, a = ab[:, 0].copy(), ab[:, 1:].copy()
    if mask is not None:
        W = W * mask
    if isinstance(spec.regime, JointL1) and W.shape[1]:
        R, r, d = W.shape
        wb = np.concatenate([W, b[..., None]], axis=-1).reshape(R * r, d + 1)
        wb = project_l1_ball(wb, spec.regime.eta).reshape(R, r, d + 1)
        W, b = wb[..., :d].copy(), wb[..., d].copy()
    return a0, a, W, b


def _batch_objective(a0, a, W, b, X, y, activation, loss):
    S = np.matmul(W, X.T)                                   # (R, r, n)
    S += b[..., None]
    S = activation(S, out=S)
    resid = a0[:, None] + np.matmul(a[:, None, :], S)[:, 0, :] - y
    # Divergence is reported by the caller, so overflow here is expected.
    with np.errstate(over="ignore", invalid="ignore"):
        obj = np.abs(resid).mean(axis=1) if loss == "L1" else (resid ** 2).mean(axis=1)
    return S, resid, obj


def train_erm(data: Dataset, spec: FunctionClassSpec, config: TrainConfig,
              init: TwoLayerParams = None) -> TrainReport:
    """Approximate the constrained ERM over ``spec`` by projected subgradient descent.

    Restart 0 is the zero network; restarts 1..``config.restarts`` draw W and b
    uniformly from ``[-init_scale, init_scale]`` with a zero output layer.
    With ``init_fan_in`` the range of W shrinks by ``sqrt(m)``, where m is
    the number of input columns the class lets W use.  If ``init`` is given
    it is projected and used as an extra restart.
    """
    if data.d != spec.d:
        raise DimensionMismatch(f"dataset has d={data.d}, class has d={spec.d}")
    if data.n == 0:
        raise ValueError("empty dataset")
    r, d = spec.r, spec.d
    act = spec.activation
    rng = np.random.default_rng(config.seed)
    R = config.restarts + 1 + (init is not None)
    W = np.zeros((R, r, d))
    b = np.zeros((R, r))
    s = config.init_scale
    sw = s / np.sqrt(spec.support_mask().sum()) if config.init_fan_in else s
    for i in range(1, config.restarts + 1):
        # Column-major draws keep the leading input columns independent of d.
        W[i] = rng.uniform(-sw, sw, size=(d, r)).T
        b[i] = rng.uniform(-s, s, size=r)
    a0 = np.zeros(R)
    a = np.zeros((R, r))
    if init is not None:
        if (init.r, init.d) != (r, d):
            raise DimensionMismatch("init params do not match the class dimensions")
        a0[-1], a[-1], W[-1], b[-1] = init.a0, init.a, init.W, init.b
    mask = spec.support_mask().astype(float) if isinstance(spec.regime, InputL0) else None
    a0, a, W, b = _project_batch(a0, a, W, b, spec, mask)

    X, y, n = data.X, data.y, data.n
    best_obj = np.full(R, np.inf)
    best = [a0.copy(), a.copy(), W.copy(), b.copy()]
    trace = []
    failed, diagnostics = False, ""
    running = []
    scratch = np.empty((R, r, n))
    t = 0
    while True:
        S, resid, obj = _batch_objective(a0, a, W, b, X, y, act, config.loss)
        if not np.isfinite(obj).all():
            bad = int(np.flatnonzero(~np.isfinite(obj))[0])
            failed = True
            diagnostics = f"non-finite objective in restart {bad} at iteration {t}"
            log.warning(diagnostics)
            break
        improved = obj < best_obj
        if improved.any():
            best_obj = np.where(improved, obj, best_obj)
            for dst, src in zip(best, (a0, a, W, b)):
                dst[improved] = src[improved]
        trace.append(float(obj.min()))
        running.append(min(trace[-1], running[-1]) if running else trace[-1])
        if t == config.max_iters:
            break
        if (config.tolerance > 0 and t >= config.patience
                and running[t - config.patience] - running[t] <= config.tolerance):
            break
        t += 1

        g = (np.sign(resid) if config.loss == "L1" else 2.0 * resid) / n     # (R, n)
        grad_a0 = g.sum(axis=1)
        grad_a = np.matmul(S, g[:, :, None])[:, :, 0]
        # Logistic derivative through its output, reusing the buffer of S.
        D = np.subtract(1.0, S, out=scratch)
        D *= S
        gX = np.concatenate([g[:, :, None] * X, g[:, :, None]], axis=2)   # (R, n, d+1)
        grad_wb = np.matmul(D, gX) * a[:, :, None]
        grad_W, grad_b = grad_wb[..., :d], grad_wb[..., d]

        step = config.step(t)
        a0, a, W, b = _project_batch(a0 - step * grad_a0, a - step * grad_a,
                                     W - step * grad_W, b - step * grad_b, spec, mask)

    k = int(np.argmin(best_obj))
    if not np.isfinite(best_obj[k]):
        failed = True
    params = TwoLayerParams(best[0][k], best[1][k], best[2][k], best[3][k])
    residual = check_feasibility(params, spec).residual
    return TrainReport(params, float(best_obj[k]), np.array(trace), t, residual, failed,
                       diagnostics)
