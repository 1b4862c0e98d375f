"""Monte Carlo studies of risk and its dependence on n, d and r.

Each study expands a plan into cells (regime, d, n, r, V, replicate), trains
one network per cell, estimates its population risk on fresh draws, and
records the theoretical bounds for the same inputs.  Seeds for data,
initialization and evaluation depend only on ``(seed, n, replicate)``, so all
regimes, widths and input dimensions at a given ``n`` and replicate are fed
identical draws (the leading input columns do not depend on ``d``).
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.special import erf
from scipy.stats import linregress

from .complexity import (BoundInputs, InnerConfig, bound_prop1_sparse, bound_thm2_choice_r, bound_thm3_risk,
                         bound_thm4_minimax, bound_thm5_eta_choice, bound_thm5_risk, delta_eta,
                         rademacher_mc)
from .nets import (LOGISTIC, ActivationSpec, FunctionClassSpec, InputL0, JointL1, OutputL1,
                   TwoLayerParams, forward)
from .optim import TrainConfig, train_erm
from .targets import (DataDistribution, NoiseSpec, TargetSpec, UnsupportedDistribution,
                      barron_constant, cosine_target, derive_seed, eval_target,
                      min_admissible_V, sample_dataset)

log = logging.getLogger(__name__)

REGIMES = ("output_l1", "joint_l1", "input_l0")


# --- population risk ------------------------------------------------------------------

def _expected_abs_shift(e, noise: NoiseSpec):
    """``E|e - eps|`` for each entry of ``e`` in closed form."""
    e = np.abs(e)
    s = noise.scale
    if noise.kind == "none" or s == 0:
        return e
    if noise.kind == "gaussian":
        z = e / s
        return s * math.sqrt(2.0 / math.pi) * np.exp(-0.5 * z * z) + e * erf(z / math.sqrt(2.0))
    return e + s * np.exp(-e / s)


def population_risk_mc(params: TwoLayerParams, activation: ActivationSpec, target: TargetSpec,
                       dist: DataDistribution, noise: NoiseSpec, m: int, seed: int,
                       method: str = "exact"):
    """Estimate ``E|f*(x) + eps - f(x)| - E|eps|`` from ``m`` fresh input draws.

    ``method="sampled"`` also draws the noise and averages
    ``|f*(z) + eps - f(z)|``.  ``method="exact"`` integrates the noise out in
    closed form for each ``z``, which estimates the same quantity with less
    variance.  Either way ``E|eps|`` is subtracted exactly.

    Returns ``(estimate, std_error)``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    x_seq, eps_seq = np.random.SeedSequence(seed).spawn(2)
    Z = dist.sample(np.random.default_rng(x_seq), m)
    err = forward(params, activation, Z) - eval_target(target, Z)
    if method == "sampled":
        eps = noise.sample(np.random.default_rng(eps_seq), m)
        per_point = np.abs(eps - err)
    elif method == "exact":
        per_point = _expected_abs_shift(err, noise)
    else:
        raise ValueError(f"unknown risk method {method!r}")
    per_point = per_point - noise.mean_abs()
    se = float(per_point.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return float(per_point.mean()), se


# --- rate fitting ------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_std_error: float
    points: int


def fit_rate(ns, risks) -> RateFit:
    """Least-squares fit of ``log risk = intercept + slope * log n``.

    Nonpositive or non-finite risks are dropped with a warning; fewer than
    three remaining points is an error.
    """
    ns = np.asarray(ns, dtype=float)
    risks = np.asarray(risks, dtype=float)
    if ns.shape != risks.shape:
        raise ValueError("ns and risks must have the same length")
    keep = np.isfinite(risks) & (risks > 0) & (ns > 0)
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} nonpositive or missing risk values",
                      RuntimeWarning, stacklevel=2)
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 positive points to fit a rate, have {int(keep.sum())}")
    res = linregress(np.log(ns[keep]), np.log(risks[keep]))
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr), int(keep.sum()))


# --- records -----------------------------------------------------------------------

CSV_HEADER = ("regime", "target", "d", "k", "n", "r", "V", "eta", "tau", "replicate", "seed",
              "train_loss", "pop_risk", "pop_risk_se", "bound_thm3", "bound_thm5",
              "bound_prop1", "bound_thm4", "wall_ms")


@dataclass(frozen=True)
class RunRecord:
    regime: str
    target: str
    d: int
    k: int
    n: int
    r: int
    V: float
    eta: float
    tau: float
    replicate: int
    seed: int
    train_loss: float
    pop_risk: float
    pop_risk_se: float
    bound_thm3: float
    bound_thm5: float
    bound_prop1: float
    bound_thm4: float
    wall_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return math.isfinite(self.train_loss) and math.isfinite(self.pop_risk)


_FIELD_TYPES = {f.name: f.type for f in fields(RunRecord)}
assert tuple(_FIELD_TYPES) == CSV_HEADER


def _format_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _parse_value(kind: str, text: str):
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    return float(text)


def write_records_csv(records, path, append: bool = False) -> None:
    """Write records under the fixed header; ``append`` adds rows to an existing file."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not append or fh.tell() == 0:
            writer.writerow(CSV_HEADER)
        for rec in records:
            row = asdict(rec)
            writer.writerow([_format_value(row[name]) for name in CSV_HEADER])


def read_records_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        unknown = [h for h in header if h not in _FIELD_TYPES]
        if unknown:
            raise ValueError(f"{path}:1: unknown column(s) {unknown}")
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}:1: header does not match the record schema")
        records = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(CSV_HEADER):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                values = {name: _parse_value(_FIELD_TYPES[name], text)
                          for name, text in zip(CSV_HEADER, row)}
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            records.append(RunRecord(**values))
    return records


# --- plans ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentPlan:
    """Grid and policies shared by every study.

    ``v_policy`` is ``"fixed"`` (``V = v_value``) or ``"min_admissible"``
    (``V = v_value * (2C + f(0))``).  ``eta_policy`` is ``"fixed"`` or
    ``"thm5"`` (``(n log^2 n)^(1/3)``).  ``r_policy`` is ``"fixed"``,
    ``"thm2"`` (``V sqrt(n / (d log n))``) or ``"multiple_of_n"``.
    """

    ns: tuple = (250, 500, 1000, 2000, 4000)
    ds: tuple = (2, 4)
    regimes: tuple = ("output_l1",)
    target: TargetSpec = field(default_factory=lambda: cosine_target(1))
    distribution: str = "uniform-box"
    M: float = 1.0
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec.gaussian(0.3))
    v_policy: str = "min_admissible"
    v_value: float = 1.0
    eta_policy: str = "thm5"
    eta_value: float = 1.0
    r_policy: str = "thm2"
    r_value: float = 1.0
    replicates: int = 5
    eval_samples: int = 100_000
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    activation: ActivationSpec = LOGISTIC
    risk_method: str = "exact"
    r_multiples: tuple = (0.25, 1.0, 4.0)
    loose_factor: float = 1000.0
    record_timing: bool = False
    parallel: bool = False

    def __post_init__(self):
        if not self.ns or not self.ds:
            raise ValueError("ns and ds must be nonempty")
        if min(self.ns) < 2:
            raise ValueError("every n must be >= 2")
        if min(self.ds) < self.target.d:
            raise ValueError(f"every d must be >= the target's dimension {self.target.d}")
        for regime in self.regimes:
            if regime not in REGIMES:
                raise ValueError(f"unknown regime {regime!r}")
        if self.v_policy not in ("fixed", "min_admissible"):
            raise ValueError(f"unknown v_policy {self.v_policy!r}")
        if self.eta_policy not in ("fixed", "thm5"):
            raise ValueError(f"unknown eta_policy {self.eta_policy!r}")
        if self.r_policy not in ("fixed", "thm2", "multiple_of_n"):
            raise ValueError(f"unknown r_policy {self.r_policy!r}")
        if self.replicates < 1 or self.eval_samples < 1:
            raise ValueError("replicates and eval_samples must be positive")
        if self.v_value < 0 or not self.eta_value > 0 or self.r_value < 0:
            raise ValueError("policy values out of range")
        if self.risk_method not in ("exact", "sampled"):
            raise ValueError(f"unknown risk_method {self.risk_method!r}")

    def target_at(self, d: int) -> TargetSpec:
        return self.target.with_dim(d)

    def dist_at(self, d: int) -> DataDistribution:
        return DataDistribution(self.distribution, d, self.M)

    def V_at(self, d: int, factor: float = 1.0) -> float:
        if self.v_policy == "fixed":
            return self.v_value * factor
        return max(min_admissible_V(self.target_at(d), self.dist_at(d)), 0.0) \
            * self.v_value * factor

    def eta_at(self, n: int) -> float:
        return bound_thm5_eta_choice(n) if self.eta_policy == "thm5" else self.eta_value

    def r_at(self, n: int, d: int, V: float) -> int:
        if self.r_policy == "fixed":
            return int(self.r_value)
        if self.r_policy == "multiple_of_n":
            return max(1, int(round(self.r_value * n)))
        return bound_thm2_choice_r(BoundInputs(V=V, d=d, n=n))


@dataclass(frozen=True)
class Cell:
    regime: str
    d: int
    n: int
    r: int
    V: float
    replicate: int


def cell_bound_inputs(plan: ExperimentPlan, rec: RunRecord):
    """Bound inputs implied by a record, with ``C`` from the plan's target.

    Returns ``(inputs, has_C)``; without a bounded box ``C`` is undefined and
    the inputs carry ``C = 0``.
    """
    try:
        C, has_C = barron_constant(plan.target_at(rec.d), plan.dist_at(rec.d)), True
    except UnsupportedDistribution:
        C, has_C = 0.0, False
    return BoundInputs(C=C, V=rec.V, eta=rec.eta, tau=rec.tau, r=max(rec.r, 1), d=rec.d,
                       k=rec.k, n=rec.n), has_C


def record_bounds(plan: ExperimentPlan, rec: RunRecord) -> dict:
    """Bound columns for a record, from the closed-form calculators."""
    inputs, has_C = cell_bound_inputs(plan, rec)
    no_C = not has_C
    # eta = 0 means sigma(0 x) = 1/2, whose deficit is exactly 1/2.
    delta = delta_eta(plan.activation, inputs.eta) if inputs.eta > 0 else 0.5
    return {
        "bound_thm3": math.nan if no_C else bound_thm3_risk(inputs, delta),
        "bound_thm5": math.nan if no_C else bound_thm5_risk(inputs, delta),
        "bound_prop1": bound_prop1_sparse(inputs),
        "bound_thm4": bound_thm4_minimax(inputs),
    }


def _class_spec(plan: ExperimentPlan, cell: Cell) -> FunctionClassSpec:
    if cell.regime == "joint_l1":
        regime = JointL1(plan.eta_at(cell.n))
    elif cell.regime == "input_l0":
        regime = InputL0(tuple(sorted(plan.target_at(cell.d).support)))
    else:
        regime = OutputL1()
    return FunctionClassSpec(cell.V, regime, cell.r, cell.d, plan.activation)


def run_cell(plan: ExperimentPlan, cell: Cell):
    """Train and evaluate one cell.  Returns ``(record, params or None)``."""
    start = time.perf_counter()
    target = plan.target_at(cell.d)
    dist = plan.dist_at(cell.d)
    seed = derive_seed(plan.seed, cell.n, cell.replicate)
    data = sample_dataset(target, dist, plan.noise, cell.n, seed)
    spec = _class_spec(plan, cell)
    config = replace(plan.train, seed=derive_seed(seed, 1))
    report = train_erm(data, spec, config)
    params = report.best_params
    if report.failed:
        log.warning("cell %s failed: %s", cell, report.diagnostics)
        train_loss = risk = risk_se = math.nan
        params = None
    else:
        train_loss = report.best_objective
        risk, risk_se = population_risk_mc(report.best_params, plan.activation, target, dist,
                                           plan.noise, plan.eval_samples, derive_seed(seed, 2),
                                           plan.risk_method)
    if isinstance(spec.regime, JointL1):
        eta = spec.regime.eta
    else:
        # Input-layer scale of the fitted network: max_j sup_x |w_j . x|.
        W = report.best_params.W
        scale = plan.M if plan.distribution == "uniform-box" else 1.0
        eta = float(scale * np.abs(W).sum(axis=1).max()) if W.size else 0.0
    rec = RunRecord(cell.regime, target.name, cell.d, target.k, cell.n, cell.r, cell.V, eta,
                    plan.noise.tau, cell.replicate, seed, train_loss, risk, risk_se,
                    math.nan, math.nan, math.nan, math.nan)
    wall = (time.perf_counter() - start) * 1e3 if plan.record_timing else 0.0
    rec = replace(rec, wall_ms=wall, **record_bounds(plan, rec))
    log.info("cell regime=%s d=%d n=%d r=%d V=%.4g rep=%d risk=%.4g", cell.regime, cell.d,
             cell.n, cell.r, cell.V, cell.replicate, rec.pop_risk)
    return rec, params


def _run_cells(plan: ExperimentPlan, cells):
    if plan.parallel and len(cells) > 1:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(run_cell, [plan] * len(cells), cells))
    return [run_cell(plan, cell) for cell in cells]


def _mean_risk(records) -> float:
    vals = [r.pop_risk for r in records if r.ok]
    return float(np.mean(vals)) if vals else math.nan


def _mean_train(records) -> float:
    vals = [r.train_loss for r in records if r.ok]
    return float(np.mean(vals)) if vals else math.nan


# --- studies -----------------------------------------------------------------------

@dataclass
class StudyResult:
    records: list
    summary: dict


def run_rate_study(plan: ExperimentPlan) -> StudyResult:
    """Risk against n for every (d, regime); summary maps ``(d, regime)`` to a RateFit."""
    cells = []
    for regime in plan.regimes:
        for d in plan.ds:
            V = plan.V_at(d)
            for n in plan.ns:
                r = plan.r_at(n, d, V)
                cells += [Cell(regime, d, n, r, V, rep) for rep in range(plan.replicates)]
    records = [rec for rec, _ in _run_cells(plan, cells)]
    summary = {}
    for regime in plan.regimes:
        for d in plan.ds:
            means = [_mean_risk([x for x in records if x.regime == regime and x.d == d
                                 and x.n == n]) for n in plan.ns]
            try:
                summary[(d, regime)] = fit_rate(plan.ns, means)
            except ValueError as exc:
                log.warning("no rate fit for d=%d regime=%s: %s", d, regime, exc)
                summary[(d, regime)] = None
    return StudyResult(records, summary)


def off_support_leakage(params: TwoLayerParams, support) -> tuple:
    """``(sum over off-support columns, sum over support columns)`` of column-max |W|."""
    colmax = np.abs(params.W).max(axis=0) if params.r else np.zeros(params.d)
    mask = np.zeros(params.d, dtype=bool)
    mask[list(support)] = True
    return float(colmax[~mask].sum()), float(colmax[mask].sum())


def run_sparsity_study(plan: ExperimentPlan) -> StudyResult:
    """Risk against d at fixed n (``plan.ns[0]``) for each regime.

    Summary per regime: mean risk per d, ``ratio`` = risk(max d) / risk(min d),
    and for each replicate at the largest d whether off-support weight mass is
    below support weight mass.
    """
    n = plan.ns[0]
    cells = []
    for regime in plan.regimes:
        for d in plan.ds:
            V = plan.V_at(d)
            r = plan.r_at(n, d, V)
            cells += [Cell(regime, d, n, r, V, rep) for rep in range(plan.replicates)]
    results = _run_cells(plan, cells)
    records = [rec for rec, _ in results]
    support = sorted(plan.target.support)
    d_lo, d_hi = min(plan.ds), max(plan.ds)
    summary = {}
    for regime in plan.regimes:
        risk_by_d = {d: _mean_risk([x for x in records if x.regime == regime and x.d == d])
                     for d in plan.ds}
        concentrated = []
        for rec, params in results:
            if rec.regime == regime and rec.d == d_hi and params is not None:
                off, on = off_support_leakage(params, support)
                concentrated.append(off < on)
        summary[regime] = {
            "risk_by_d": risk_by_d,
            "ratio": risk_by_d[d_hi] / risk_by_d[d_lo],
            "support_concentrated": concentrated,
        }
    return StudyResult(records, summary)


def run_overfit_study(plan: ExperimentPlan) -> StudyResult:
    """Train loss and risk against width at fixed n and d.

    Two arms share data and seeds: ``constrained`` uses ``V_at(d)`` and
    ``loose`` multiplies it by ``plan.loose_factor``.  Widths are the
    ``bound_thm2_choice_r`` width plus ``plan.r_multiples`` times n.  Summary maps
    ``(arm, width label)`` to mean train loss and mean risk.
    """
    n, d = plan.ns[0], plan.ds[0]
    regime = plan.regimes[0]
    V_con = plan.V_at(d)
    widths = {"thm2": bound_thm2_choice_r(BoundInputs(V=V_con, d=d, n=n))}
    for mult in plan.r_multiples:
        widths[f"{mult:g}n"] = max(1, int(round(mult * n)))
    arms = {"constrained": V_con, "loose": V_con * plan.loose_factor}
    cells, labels = [], []
    for arm, V in arms.items():
        for label, r in widths.items():
            for rep in range(plan.replicates):
                cells.append(Cell(regime, d, n, r, V, rep))
                labels.append((arm, label))
    records = [rec for rec, _ in _run_cells(plan, cells)]
    summary = {}
    for key in dict.fromkeys(labels):
        group = [rec for rec, lab in zip(records, labels) if lab == key]
        summary[key] = {"r": group[0].r, "train_loss": _mean_train(group),
                        "pop_risk": _mean_risk(group)}
    return StudyResult(records, summary)


# --- default desk-scale plans ----------------------------------------------------------

def rate_plan(**overrides) -> ExperimentPlan:
    """Risk against n for cos(x1) on the unit box with width and budget from the bounds."""
    base = dict(ns=(250, 500, 1000, 2000, 4000), ds=(2, 4), regimes=("output_l1",),
                target=cosine_target(1), noise=NoiseSpec.gaussian(0.3),
                v_policy="min_admissible", r_policy="thm2", replicates=5,
                train=TrainConfig(max_iters=2000, step_size=10.0, init_scale=3.0, restarts=5))
    base.update(overrides)
    return ExperimentPlan(**base)


def sparsity_plan(**overrides) -> ExperimentPlan:
    """Risk against d for a one-coordinate target under the three regimes.

    The phase shift makes the target non-even in x1, so the input-layer
    gradient at small weights already points toward the relevant coordinate.
    """
    base = dict(ns=(500,), ds=(20, 200), regimes=("output_l1", "joint_l1", "input_l0"),
                target=cosine_target(1, phase=1.0), noise=NoiseSpec.gaussian(0.3),
                v_policy="min_admissible", eta_policy="fixed", eta_value=2.0,
                r_policy="fixed", r_value=10, replicates=5,
                train=TrainConfig(max_iters=2000, step_size=10.0, init_scale=3.0, restarts=5,
                                  init_fan_in=True))
    base.update(overrides)
    return ExperimentPlan(**base)


def overfit_plan(**overrides) -> ExperimentPlan:
    """Small-n width sweep with unit noise, where the loose arm can interpolate."""
    base = dict(ns=(50,), ds=(10,), regimes=("output_l1",), target=cosine_target(1),
                noise=NoiseSpec.gaussian(1.0), v_policy="min_admissible",
                r_multiples=(0.25, 1.0, 4.0), loose_factor=1000.0, replicates=5,
                train=TrainConfig(max_iters=15000, step_size=10.0, init_scale=3.0, restarts=5))
    base.update(overrides)
    return ExperimentPlan(**base)


# --- complexity sweep ------------------------------------------------------------------

@dataclass
class SweepResult:
    estimates: dict
    fit: RateFit


def run_rademacher_sweep(ns, d: int, V: float, regime: str = "output_l1", eta: float = 1.0,
                         k: int = 1, trials: int = 200, inner: InnerConfig = None, seed: int = 0,
                         distribution: str = "uniform-box", M: float = 1.0) -> SweepResult:
    """Monte Carlo complexity of the class at each n, and the fitted log-log slope.

    The sample and sign streams depend only on ``(seed, n)``, so runs that
    differ only in ``V`` see identical draws.
    """
    if regime == "joint_l1":
        reg = JointL1(eta)
    elif regime == "input_l0":
        reg = InputL0(tuple(range(k)))
    elif regime == "output_l1":
        reg = OutputL1()
    else:
        raise ValueError(f"unknown regime {regime!r}")
    spec = FunctionClassSpec(V, reg, 1, d)
    dist = DataDistribution(distribution, d, M)
    estimates = {}
    for n in ns:
        X = dist.sample(np.random.default_rng(derive_seed(seed, n)), n)
        estimates[n] = rademacher_mc(spec, X, trials, inner, seed=derive_seed(seed, n, 1))
        log.info("rademacher n=%d mean=%.5g se=%.2g", n, estimates[n].mean,
                 estimates[n].std_error)
    means = [estimates[n].mean for n in ns]
    fit = fit_rate(ns, means) if V > 0 and len(ns) >= 3 else None
    return SweepResult(estimates, fit)
