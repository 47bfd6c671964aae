"""Experiment runner.

Subcommands: simulate (one schedule), sweep (several schedules, shared
settings), gmode (count-decay cost law), oracle (closed forms), validate
(acceptance suite).  Config comes from flags or a JSON file (`--config`);
flags override the file.  Outputs are plain CSV/JSON, each embedding a hash
of the effective config, and are bit-identical across reruns of the same
config and seed on one platform.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__, _rng, analysis, oracles, validation
from .analysis import (
    AnalyticEqualSided,
    CoverageError,
    EmpiricalPatient,
    LOG_LOG,
    SEMILOG_X,
    empirical_patient_denominator,
    fit_growth,
    matching_ratio,
    waiting_ratio,
    write_fits_json,
    write_ratio_csv,
)
from .costs import CONSTANT, PRODUCT_FORM, RateModel, UNIFORM_IID
from .engine import DecayModel, Horizon, MatchTarget, run, run_ensemble
from .schedules import PATIENT, ScheduleSpec, parse_schedule

__all__ = ["ExperimentConfig", "ConfigError", "run_experiment", "main"]

_TRACE_REPS = 5
_EMPIRICAL_A_CAP = 200


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    schedule: str
    rate: Optional[str]
    delta: Optional[float]
    scale: float
    matches: Optional[int]
    horizon: Optional[float]
    reps: int
    seed: int
    out: str
    a_grid: Tuple[int, ...]
    tau_grid: Tuple[float, ...]
    jobs: int
    no_costs: bool

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if (self.matches is None) == (self.horizon is None):
            raise ConfigError("exactly one of --matches / --horizon is required")
        if (self.rate is None) == (self.delta is None):
            raise ConfigError("exactly one of --rate / --delta is required")
        if not self.a_grid and not self.no_costs:
            raise ConfigError("a_grid must be non-empty")
        if not self.tau_grid:
            raise ConfigError("tau_grid must be non-empty")
        if list(self.a_grid) != sorted(set(self.a_grid)) or any(a < 1 for a in self.a_grid):
            raise ConfigError(f"a_grid must be sorted, unique, >= 1: {list(self.a_grid)}")
        if list(self.tau_grid) != sorted(set(self.tau_grid)) or any(
            t <= 0 for t in self.tau_grid
        ):
            raise ConfigError(f"tau_grid must be sorted, unique, positive: {list(self.tau_grid)}")


def _parse_rate(text: str) -> RateModel:
    parts = text.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind in ("const", "constant"):
            if len(parts) != 2:
                raise ValueError("expected const:<rate>")
            return RateModel.constant(float(parts[1]))
        if kind == "uniform":
            if len(parts) != 3:
                raise ValueError("expected uniform:<lo>:<hi>")
            return RateModel.uniform_iid(float(parts[1]), float(parts[2]))
        if kind == "product":
            if len(parts) != 3:
                raise ValueError("expected product:<lo>:<hi>")
            return RateModel.product_form(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"bad rate {text!r}: {exc}") from None
    raise ConfigError(f"unknown rate family {kind!r} (const | uniform | product)")


def _parse_int_grid(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"bad integer grid {text!r}") from None


def _parse_float_grid(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"bad float grid {text!r}") from None


def _default_a_grid(top: int) -> Tuple[int, ...]:
    pts = sorted({max(1, round(top / 10 ** (d / 2.0))) for d in range(4, -1, -1)})
    return tuple(pts)


def _default_tau_grid(top: float) -> Tuple[float, ...]:
    return tuple(top / 10 ** (d / 2.0) for d in range(4, -1, -1))


def _config_hash(cfg: ExperimentConfig) -> str:
    # out/jobs/command do not affect the numbers, so the hash names the
    # experiment itself and stays stable across folders and worker counts.
    payload = {
        k: v for k, v in cfg.__dict__.items() if k not in ("out", "jobs", "command")
    }
    text = json.dumps(payload, sort_keys=True, default=list)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _build_config(args: argparse.Namespace, command: str, schedule: str) -> ExperimentConfig:
    file_cfg: Dict[str, object] = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{args.config}: top level must be an object")

    def pick(name: str, default=None):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in file_cfg:
            return file_cfg[name]
        return default

    matches = pick("matches")
    horizon = pick("horizon")
    if matches is not None:
        matches = int(matches)
    if horizon is not None:
        horizon = float(horizon)

    a_grid = pick("a_grid")
    if isinstance(a_grid, str):
        a_grid = _parse_int_grid(a_grid)
    if a_grid is None:
        if matches is not None:
            a_grid = _default_a_grid(matches)
        elif horizon is not None:
            a_grid = _default_a_grid(max(1, int(0.45 * horizon)))
    tau_grid = pick("tau_grid")
    if isinstance(tau_grid, str):
        tau_grid = _parse_float_grid(tau_grid)
    if tau_grid is None:
        top = horizon if horizon is not None else 1.8 * float(matches)
        tau_grid = _default_tau_grid(top)

    seed = pick("seed")
    if seed is None:
        raise ConfigError("seed is required (no wall-clock seeding)")
    out = pick("out")
    if out is None:
        raise ConfigError("--out directory is required")
    rate = pick("rate")
    delta = pick("delta")
    if command == "gmode":
        if delta is None:
            raise ConfigError("gmode requires --delta")
        rate = None
    elif rate is None and delta is None:
        rate = "const:1"
    return ExperimentConfig(
        command=command,
        schedule=schedule,
        rate=rate,
        delta=float(delta) if delta is not None else None,
        scale=float(pick("scale", 1.0)),
        matches=matches,
        horizon=horizon,
        reps=int(pick("reps", 100)),
        seed=int(seed),
        out=str(out),
        a_grid=tuple(int(a) for a in a_grid) if a_grid else (),
        tau_grid=tuple(float(t) for t in tau_grid),
        jobs=int(pick("jobs", _default_jobs())),
        no_costs=bool(pick("no_costs", False)),
    )


def _default_jobs() -> int:
    raw = os.environ.get("DYNACLEAR_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_traces(path: str, traced, config_hash: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config {config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["rep", "k", "time", "cost", "m_c", "m_p", "cum_cost", "cum_wait"])
        for rep, trace in traced:
            for record, cum in zip(trace.records, trace.cum_costs()):
                writer.writerow(
                    [
                        rep, record.k, repr(record.time), repr(record.cost),
                        record.m_c, record.m_p, repr(cum),
                        repr(trace.wait_at(record.time)),
                    ]
                )


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run the ensemble an ExperimentConfig describes and write the report bundle."""
    spec = parse_schedule(cfg.schedule)
    if cfg.delta is not None:
        cost_mode = DecayModel(delta=cfg.delta, scale=cfg.scale)
    else:
        cost_mode = _parse_rate(cfg.rate)
    stop = MatchTarget(cfg.matches) if cfg.matches is not None else Horizon(cfg.horizon)
    collect_costs = not cfg.no_costs
    cfg_hash = _config_hash(cfg)
    os.makedirs(cfg.out, exist_ok=True)

    traces = run_ensemble(
        spec, cost_mode, stop, cfg.seed, cfg.reps, jobs=cfg.jobs,
        collect_costs=collect_costs, collect_records=False,
        a_grid=cfg.a_grid if collect_costs else (), tau_grid=cfg.tau_grid,
    )

    alpha = []
    denominator_tag = "analytic"
    if collect_costs:
        if isinstance(cost_mode, RateModel) and cost_mode.mode != CONSTANT:
            if max(cfg.a_grid) > _EMPIRICAL_A_CAP:
                raise ConfigError(
                    f"heterogeneous rates need the empirical patient denominator, "
                    f"supported for a_grid up to {_EMPIRICAL_A_CAP}; pass --a-grid "
                    f"accordingly or use const rates"
                )
            den = empirical_patient_denominator(
                cfg.a_grid, cost_mode, _rng.derive_seed(cfg.seed, 1_000_003),
                max(100, min(cfg.reps, 400)), jobs=cfg.jobs,
            )
            denominator_tag = den.tag
        else:
            den = AnalyticEqualSided()
        alpha = matching_ratio(traces, cfg.a_grid, den)
    beta = waiting_ratio(traces, cfg.tau_grid)

    write_ratio_csv(os.path.join(cfg.out, "ratios_alpha.csv"), alpha, cfg_hash)
    write_ratio_csv(os.path.join(cfg.out, "ratios_beta.csv"), beta, cfg_hash)

    fits = {}
    if len(alpha) >= 4:
        pts = [(e.x, e.ratio) for e in alpha]
        fits["alpha_loglog"] = fit_growth(pts, LOG_LOG)
        fits["alpha_semilogx"] = fit_growth(pts, SEMILOG_X)
    if len(beta) >= 4:
        fits["beta_loglog"] = fit_growth([(e.x, e.ratio) for e in beta], LOG_LOG)
    write_fits_json(os.path.join(cfg.out, "fits.json"), fits, cfg_hash)

    traced = []
    for rep in range(min(cfg.reps, _TRACE_REPS)):
        rep_seed = _rng.derive_seed(cfg.seed, rep)
        try:
            traced.append((rep, run(spec, cost_mode, stop, rep_seed, collect_costs=collect_costs)))
        except ValueError:
            break
    _write_traces(os.path.join(cfg.out, "traces.csv"), traced, cfg_hash)

    summary = {
        "config": {**cfg.__dict__, "a_grid": list(cfg.a_grid), "tau_grid": list(cfg.tau_grid)},
        "config_hash": cfg_hash,
        "versions": {
            "package": __version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "denominator": denominator_tag,
        "results": {
            "reps": cfg.reps,
            "mean_total_cost": math.fsum(t.summary.total_cost for t in traces) / cfg.reps,
            "mean_wait_integral": math.fsum(t.summary.wait_integral for t in traces) / cfg.reps,
            "mean_matches": math.fsum(t.summary.a for t in traces) / cfg.reps,
            "mean_final_tau": math.fsum(t.summary.tau for t in traces) / cfg.reps,
            "traced_reps": len(traced),
        },
    }
    for mod_name in ("numpy", "scipy"):
        mod = sys.modules.get(mod_name)
        if mod is None:
            import importlib

            mod = importlib.import_module(mod_name)
        summary["versions"][mod_name] = mod.__version__
    path = os.path.join(cfg.out, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _sanitize(label: str) -> str:
    return label.replace(":", "-").replace("/", "-")


def _cmd_simulate(args: argparse.Namespace) -> int:
    schedule = args.schedule
    if schedule is None and args.config:
        with open(args.config, encoding="utf-8") as fh:
            schedule = json.load(fh).get("schedule")
    if schedule is None:
        raise ConfigError("--schedule is required")
    return run_experiment(_build_config(args, "simulate", schedule))


def _cmd_sweep(args: argparse.Namespace) -> int:
    if not args.schedules:
        raise ConfigError("--schedules is required")
    labels = [s.strip() for s in args.schedules.split(",") if s.strip()]
    if not labels:
        raise ConfigError("no schedules given")
    base_out = args.out
    if base_out is None:
        raise ConfigError("--out directory is required")
    combined: Dict[str, analysis.GrowthFit] = {}
    hashes = []
    for label in labels:
        sub = argparse.Namespace(**vars(args))
        sub.out = os.path.join(base_out, _sanitize(label))
        cfg = _build_config(sub, "sweep", label)
        run_experiment(cfg)
        hashes.append(_config_hash(cfg))
        fits_path = os.path.join(sub.out, "fits.json")
        with open(fits_path, encoding="utf-8") as fh:
            for name, fit in json.load(fh)["fits"].items():
                combined[f"{label}/{name}"] = analysis.GrowthFit(**fit)
    sweep_hash = hashlib.sha256("".join(hashes).encode()).hexdigest()[:16]
    write_fits_json(os.path.join(base_out, "fits.json"), combined, sweep_hash)
    return 0


def _cmd_gmode(args: argparse.Namespace) -> int:
    schedule = args.schedule
    if schedule is None and args.gamma is not None:
        schedule = f"power:{args.gamma:g}"
    if schedule is None:
        raise ConfigError("gmode needs --schedule or --gamma")
    return run_experiment(_build_config(args, "gmode", schedule))


def _cmd_oracle(args: argparse.Namespace) -> int:
    name = args.name
    if name == "buck":
        value = oracles.expected_min_k_assignment(args.nc, args.np_, args.k)
        print(f"{value:.5f}")
    elif name == "basel":
        print(repr(oracles.patient_cost_equal_sided(args.a)))
    elif name == "zeta":
        print(repr(oracles.zeta(args.s)))
    elif name == "wait":
        print(repr(oracles.greedy_expected_wait(args.tau)))
    elif name == "walk":
        print(repr(oracles.expected_abs_walk(args.k)))
    elif name == "window":
        win = oracles.free_lunch_window(args.delta)
        print(json.dumps({"lo": win.lower, "hi": win.upper, "empty": win.empty}, sort_keys=True))
    elif name == "two-each":
        print(repr(oracles.expected_arrivals_two_each()))
    else:
        raise ConfigError(f"unknown oracle {name!r}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    only = None
    if args.only:
        only = [t for chunk in args.only for t in chunk.split(",") if t]
    results = validation.run_criteria(only=only, jobs=args.jobs or _default_jobs())
    for r in results:
        mark = "ok  " if r.passed else "FAIL"
        print(f"{mark} {r.number:2d} {r.name:<22s} {r.seconds:7.1f}s  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if args.report:
        payload = {
            "config": hashlib.sha256(
                json.dumps({"only": only}, sort_keys=True).encode()
            ).hexdigest()[:16],
            "criteria": [
                {
                    "number": r.number,
                    "name": r.name,
                    "passed": r.passed,
                    "detail": r.detail,
                }
                for r in results
            ],
        }
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 1 if failed else 0


def _add_experiment_flags(p: argparse.ArgumentParser, schedules: bool = False) -> None:
    if schedules:
        p.add_argument("--schedules", help="comma-separated schedule specs")
    else:
        p.add_argument("--schedule", help="schedule spec, e.g. greedy or power:0.5")
    p.add_argument("--rate", help="rate model: const:<r> | uniform:<lo>:<hi> | product:<lo>:<hi>")
    p.add_argument("--matches", type=int, help="stop at the N-th match")
    p.add_argument("--horizon", type=float, help="stop at clock time")
    p.add_argument("--reps", type=int, help="replications (default 100)")
    p.add_argument("--seed", type=int, help="base seed (required)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--a-grid", dest="a_grid", help="match-count grid, e.g. 100,1000,10000")
    p.add_argument("--tau-grid", dest="tau_grid", help="clock grid, e.g. 100,1000,10000")
    p.add_argument("--jobs", type=int, help="worker processes (default $DYNACLEAR_JOBS or 1)")
    p.add_argument("--no-costs", dest="no_costs", action="store_true", default=None,
                   help="skip cost accounting (waiting-time studies)")
    p.add_argument("--config", help="JSON config file; flags override its keys")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynaclear",
        description="Two-sided dynamic matching market simulator and oracle suite.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one schedule")
    _add_experiment_flags(p)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("sweep", help="run several schedules with shared settings")
    _add_experiment_flags(p, schedules=True)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("gmode", help="count-decay cost law runs")
    _add_experiment_flags(p)
    p.add_argument("--delta", type=float, help="decay exponent (> 1)")
    p.add_argument("--gamma", type=float, help="power-law schedule exponent")
    p.add_argument("--scale", type=float, help="decay scale c (default 1)")
    p.set_defaults(fn=_cmd_gmode)

    p = sub.add_parser("oracle", help="print a closed-form value")
    p.add_argument("name", choices=["buck", "basel", "zeta", "wait", "walk", "window", "two-each"])
    p.add_argument("--nc", type=int, default=5)
    p.add_argument("--np", dest="np_", type=int, default=5)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--a", type=int, default=5)
    p.add_argument("--s", type=float, default=1.5)
    p.add_argument("--tau", type=float, default=100.0)
    p.add_argument("--delta", type=float, default=3.0)
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("validate", help="run the acceptance criteria suite")
    p.add_argument("--only", action="append", help="criterion numbers or name parts")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--report", help="write a JSON pass/fail report to this path")
    p.set_defaults(fn=_cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CoverageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
