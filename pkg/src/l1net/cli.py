"""Command-line entry point.

Every command prints ``key=value`` summary lines on standard output.  Files
go under the output directory, first as ``<name>.partial`` and renamed once
complete.  Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .complexity import (BoundInputs, InnerConfig, bound_prop1_sparse, bound_thm1_approx,
                         bound_thm2_choice_r, bound_thm3_risk, bound_thm4_minimax,
                         bound_thm5_eta_choice, bound_thm5_risk, delta_eta)
from .config import COMMAND_SECTIONS, Config, ConfigError, apply_overrides, load
from .experiments import (Cell, ExperimentPlan, overfit_plan, population_risk_mc, rate_plan,
                          run_cell, run_overfit_study, run_rademacher_sweep, run_rate_study,
                          run_sparsity_study, sparsity_plan, write_records_csv)
from .nets import LOGISTIC, load_params, save_params
from .optim import TrainConfig
from .targets import (DataDistribution, NoiseSpec, cosine_target, derive_seed, sample_dataset,
                      write_dataset_csv)

log = logging.getLogger("l1net")

OUT_ENV = "L1NET_OUT_DIR"
DEFAULT_OUT = "l1net-out"
COMMANDS = tuple(COMMAND_SECTIONS)


class RunFailure(RuntimeError):
    pass


# --- output helpers --------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".6g")
    return str(value)


def emit(**pairs) -> None:
    print(" ".join(f"{k}={_fmt(v)}" for k, v in pairs.items()), flush=True)


class Output:
    """Writes files into one directory through a ``.partial`` name."""

    def __init__(self, root: Path):
        self.root = root

    def write(self, name: str, writer, complete: bool = True) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        final = self.root / name
        partial = self.root / (name + ".partial")
        writer(partial)
        if not complete:
            return partial
        os.replace(partial, final)
        return final


# --- building typed objects from config ------------------------------------------------

def _build(cfg: Config, section: str, key: str, factory):
    try:
        return factory()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), **cfg.where(section, key)) from None


def _target(cfg: Config, base):
    t = cfg.section("target")
    if not t:
        return base
    k = t.get("k", base.k)
    return _build(cfg, "target", "k", lambda: cosine_target(
        k, k=k, amplitude=t.get("amplitude", 1.0), frequency=t.get("frequency", 1.0),
        phase=t.get("phase", 0.0)))


def _noise(cfg: Config, base: NoiseSpec) -> NoiseSpec:
    s = cfg.section("noise")
    if not s:
        return base
    kind = s.get("kind", base.kind)
    scale = s.get("scale", base.scale if kind == base.kind else 0.0)
    if kind == "none":
        scale = 0.0
    return _build(cfg, "noise", "tau", lambda: NoiseSpec(kind, scale, s.get("tau")))


def _train(cfg: Config, base: TrainConfig) -> TrainConfig:
    return _build(cfg, "train", "max_iters", lambda: replace(base, **cfg.section("train")))


def _plan(cfg: Config, base: ExperimentPlan, seed: int, parallel: bool) -> ExperimentPlan:
    changes = dict(seed=seed, parallel=parallel)
    e = cfg.section("experiment")
    for key in ("ns", "ds", "regimes", "replicates", "eval_samples", "risk_method",
                "r_multiples", "loose_factor", "record_timing"):
        if key in e:
            changes[key] = e[key]
    data = cfg.section("data")
    if "n" in data:
        changes["ns"] = (data["n"],)
    if "d" in data:
        changes["ds"] = (data["d"],)
    if "distribution" in data:
        changes["distribution"] = data["distribution"]
    if "M" in data:
        changes["M"] = data["M"]
    c = cfg.section("class")
    for key, name in (("regime", "regimes"), ("v_policy", "v_policy"), ("V", "v_value"),
                      ("eta_policy", "eta_policy"), ("eta", "eta_value"),
                      ("r_policy", "r_policy"), ("r", "r_value")):
        if key in c:
            changes[name] = (c[key],) if key == "regime" else c[key]
    changes["target"] = _target(cfg, base.target)
    changes["noise"] = _noise(cfg, base.noise)
    changes["train"] = _train(cfg, base.train)
    try:
        plan = replace(base, **changes)
        # Resolve every policy once so invalid combinations fail before any training.
        for d in plan.ds:
            V = plan.V_at(d)
            for n in plan.ns:
                plan.r_at(n, d, V)
        return plan
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --- commands ---------------------------------------------------------------------------

def cmd_train(cfg: Config, args, out: Output) -> int:
    base = ExperimentPlan(ns=(1000,), ds=(2,), train=TrainConfig())
    plan = _plan(cfg, base, args.seed, False)
    if len(plan.ns) != 1 or len(plan.ds) != 1 or len(plan.regimes) != 1:
        raise ConfigError("train needs a single n, d and regime")
    n, d, regime = plan.ns[0], plan.ds[0], plan.regimes[0]
    V = plan.V_at(d)
    cell = Cell(regime, d, n, plan.r_at(n, d, V), V, 0)
    rec, params = run_cell(plan, cell)
    data = sample_dataset(plan.target_at(d), plan.dist_at(d), plan.noise, n, rec.seed)
    out.write("data.csv", lambda p: write_dataset_csv(data, p))
    out.write("train.csv", lambda p: write_records_csv([rec], p), complete=rec.ok)
    if params is None:
        raise RunFailure("training diverged; see train.csv.partial")
    path = out.write("params.txt", lambda p: save_params(params, p))
    emit(command="train", regime=regime, n=n, d=d, r=cell.r, V=V, eta=rec.eta,
         train_loss=rec.train_loss, pop_risk=rec.pop_risk, pop_risk_se=rec.pop_risk_se,
         params=str(path))
    return 0


def cmd_eval_risk(cfg: Config, args, out: Output) -> int:
    path = cfg.get("eval", "params")
    if path is None:
        raise ConfigError("required", key="eval.params")
    try:
        params = load_params(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load parameters: {exc}", **cfg.where("eval", "params"))
    d = params.d
    target = _target(cfg, cosine_target(1)).with_dim(d) if d >= 1 else None
    dist = DataDistribution(cfg.get("data", "distribution", "uniform-box"), d,
                            cfg.get("data", "M", 1.0))
    noise = _noise(cfg, NoiseSpec.gaussian(0.3))
    m = cfg.get("eval", "m", 100_000)
    risk, se = population_risk_mc(params, LOGISTIC, target, dist, noise, m,
                                  derive_seed(args.seed, 2))
    emit(command="eval-risk", d=d, r=params.r, m=m, pop_risk=risk, pop_risk_se=se)
    return 0


def _bound_inputs(cfg: Config) -> BoundInputs:
    b = cfg.section("bounds")
    fields = {k: v for k, v in b.items() if k != "delta"}
    return _build(cfg, "bounds", "n", lambda: BoundInputs(**fields))


def cmd_bounds(cfg: Config, args, out: Output) -> int:
    x = _bound_inputs(cfg)
    delta = cfg.get("bounds", "delta")
    if delta is None:
        delta = delta_eta(LOGISTIC, x.eta)
    emit(command="bounds", delta=delta, thm1=bound_thm1_approx(x, delta),
         thm2_r=bound_thm2_choice_r(x), thm3=bound_thm3_risk(x, delta),
         thm4=bound_thm4_minimax(x), thm5=bound_thm5_risk(x, delta),
         thm5_eta=bound_thm5_eta_choice(x.n), prop1=bound_prop1_sparse(x))
    return 0


def cmd_delta_eta(cfg: Config, args, out: Output) -> int:
    etas = args.eta or [cfg.get("bounds", "eta", 1.0)]
    for eta in etas:
        if not eta > 0:
            raise ConfigError(f"must be positive, got {eta}", key="--eta")
        emit(command="delta-eta", eta=eta, delta=delta_eta(LOGISTIC, eta))
    return 0


def cmd_rademacher(cfg: Config, args, out: Output) -> int:
    s = cfg.section("rademacher")
    inner = InnerConfig(**{k: s[k] for k in ("restarts", "iters", "step_size", "init_scale")
                           if k in s})
    ns = s.get("ns", (64, 128, 256, 512, 1024, 2048, 4096))
    result = run_rademacher_sweep(ns, s.get("d", 4), s.get("V", 1.0),
                                  s.get("regime", "output_l1"), s.get("eta", 1.0),
                                  s.get("k", 1), s.get("trials", 200), inner, args.seed)

    def write(path):
        with open(path, "w") as fh:
            fh.write("n,mean,std_error,trials\n")
            for n, est in result.estimates.items():
                fh.write(f"{n},{est.mean:.17g},{est.std_error:.17g},{est.trials}\n")

    path = out.write("rademacher.csv", write)
    for n, est in result.estimates.items():
        emit(command="rademacher", n=n, mean=est.mean, std_error=est.std_error)
    if result.fit is not None:
        emit(command="rademacher", slope=result.fit.slope, slope_se=result.fit.slope_std_error,
             points=result.fit.points, csv=str(path))
    return 0


def _write_study(out: Output, name: str, result) -> Path:
    ok = all(rec.ok for rec in result.records)
    path = out.write(name, lambda p: write_records_csv(result.records, p), complete=ok)
    if not ok:
        bad = sum(not rec.ok for rec in result.records)
        raise RunFailure(f"{bad} cell(s) failed; results kept in {path}")
    return path


def cmd_rate_study(cfg: Config, args, out: Output) -> int:
    plan = _plan(cfg, rate_plan(), args.seed, args.parallel)
    result = run_rate_study(plan)
    path = _write_study(out, "rate_study.csv", result)
    for (d, regime), fit in result.summary.items():
        if fit is None:
            emit(study="rate", d=d, regime=regime, slope="nan")
        else:
            emit(study="rate", d=d, regime=regime, slope=fit.slope,
                 slope_se=fit.slope_std_error, points=fit.points)
    emit(study="rate", csv=str(path))
    return 0


def cmd_sparsity_study(cfg: Config, args, out: Output) -> int:
    plan = _plan(cfg, sparsity_plan(), args.seed, args.parallel)
    result = run_sparsity_study(plan)
    path = _write_study(out, "sparsity_study.csv", result)
    for regime, s in result.summary.items():
        risks = {f"risk_d{d}": v for d, v in s["risk_by_d"].items()}
        emit(study="sparsity", regime=regime, ratio=s["ratio"], **risks,
             concentrated=f"{sum(s['support_concentrated'])}/{len(s['support_concentrated'])}")
    emit(study="sparsity", csv=str(path))
    return 0


def cmd_overfit_study(cfg: Config, args, out: Output) -> int:
    plan = _plan(cfg, overfit_plan(), args.seed, args.parallel)
    result = run_overfit_study(plan)
    path = _write_study(out, "overfit_study.csv", result)
    for (arm, label), s in result.summary.items():
        emit(study="overfit", arm=arm, width=label, r=s["r"], train_loss=s["train_loss"],
             pop_risk=s["pop_risk"])
    emit(study="overfit", csv=str(path))
    return 0


HANDLERS = {
    "train": cmd_train, "eval-risk": cmd_eval_risk, "bounds": cmd_bounds,
    "delta-eta": cmd_delta_eta, "rademacher": cmd_rademacher, "rate-study": cmd_rate_study,
    "sparsity-study": cmd_sparsity_study, "overfit-study": cmd_overfit_study,
}


# --- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l1net",
        description="Train and evaluate L1-constrained two-layer sigmoid networks, compute "
                    "complexity and risk bounds, and run Monte Carlo rate studies.")
    parser.add_argument("--version", action="version", version=f"l1net {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI-style config file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        dest="overrides",
                        help="override a config value; KEY is section.key or a bare key "
                             "(repeatable)")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--out", metavar="DIR",
                        help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--parallel", action="store_true",
                        help="run study cells in worker processes")
    common.add_argument("-v", "--verbose", action="store_true",
                        help="log one line per trained cell to standard error")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    helps = {
        "train": "fit one network and report its risk",
        "eval-risk": "estimate the population risk of saved parameters",
        "bounds": "evaluate the closed-form risk bounds",
        "delta-eta": "activation sharpness deficit for given eta values",
        "rademacher": "Monte Carlo Rademacher complexity against n",
        "rate-study": "risk against n with its fitted slope",
        "sparsity-study": "risk against input dimension for a sparse target",
        "overfit-study": "risk and train loss against width, constrained and loose",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        if name == "delta-eta":
            p.add_argument("--eta", type=float, action="append",
                           help="input-layer scale (repeatable)")
    return parser


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load(args.config) if args.config else Config()
        cfg = apply_overrides(cfg, args.overrides, args.command)
        return HANDLERS[args.command](cfg, args, Output(_out_dir(args)))
    except ConfigError as exc:
        print(f"l1net: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any module failure as a runtime error
        print(f"l1net: error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
