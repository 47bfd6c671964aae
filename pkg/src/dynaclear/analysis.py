"""Ensemble aggregation: ratio estimates against a reference schedule, growth fits.

The matching ratio divides mean cumulative cost at a match count by the
patient schedule's expected cost for the same count; the waiting ratio
divides mean integrated queue size by the greedy law (2/3)tau^(3/2).  Both
use fsum-based means, so estimates are invariant under replication
reordering.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from . import _rng, costs, oracles
from .arrivals import PoissonStream
from .assignment import min_k_assignment
from .costs import RateModel
from .engine import RunTrace

__all__ = [
    "LOG_LOG",
    "SEMILOG_X",
    "RAW",
    "CoverageError",
    "RatioEstimate",
    "GrowthFit",
    "AnalyticEqualSided",
    "EmpiricalPatient",
    "empirical_patient_denominator",
    "matching_ratio",
    "waiting_ratio",
    "fit_growth",
    "write_ratio_csv",
    "write_fits_json",
]

LOG_LOG = "loglog"
SEMILOG_X = "semilogx"
RAW = "raw"

_TRANSFORMS = (LOG_LOG, SEMILOG_X, RAW)
_RETRY_CAP = 64


class CoverageError(ValueError):
    """An ensemble does not cover the requested grid point."""

    def __init__(self, message: str, deficient: Sequence[int] = ()):
        super().__init__(message)
        self.deficient = tuple(deficient)


@dataclass(frozen=True)
class RatioEstimate:
    x: float
    ratio: float
    stderr: float
    denominator: str

    def __post_init__(self) -> None:
        if self.ratio < 0.0:
            raise ValueError("ratio cannot be negative")
        if self.stderr < 0.0:
            raise ValueError("standard error cannot be negative")


@dataclass(frozen=True)
class GrowthFit:
    transform: str
    slope: float
    intercept: float
    slope_stderr: float
    r2: float
    n_points: int

    def __post_init__(self) -> None:
        if self.transform not in _TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.n_points < 4:
            raise ValueError("growth fits need at least 4 points")


@dataclass(frozen=True)
class AnalyticEqualSided:
    """Patient-cost denominator from the closed form for identical rate-1 costs."""

    tag = "analytic"

    def value(self, a: int) -> float:
        return oracles.patient_cost_equal_sided(a)


@dataclass(frozen=True)
class EmpiricalPatient:
    """Patient-cost denominator estimated from patient replications.

    Required whenever rates are heterogeneous; the closed form only covers
    the identical-rate case.
    """

    means: Tuple[Tuple[int, float], ...]
    tag = "empirical"

    def value(self, a: int) -> float:
        for grid_a, mean in self.means:
            if grid_a == a:
                return mean
        raise CoverageError(f"no empirical denominator at A={a}")


DenominatorSource = Union[AnalyticEqualSided, EmpiricalPatient]


def _patient_mean_worker(args) -> float:
    a, cost_mode, seed = args
    tau_max = 2.0 * a + 4.0 * math.sqrt(a)
    for attempt in range(_RETRY_CAP):
        run_seed = seed if attempt == 0 else _rng.derive_seed(seed, attempt)
        stream = PoissonStream(run_seed)
        clients: List[int] = []
        providers: List[int] = []
        while True:
            times, sides = stream.take_block()
            hit_horizon = False
            for t, is_client in zip(times, sides):
                if t > tau_max:
                    hit_horizon = True
                    break
                idx = len(clients) + len(providers) + 1
                (clients if is_client else providers).append(idx)
            if hit_horizon:
                break
        if len(clients) >= a and len(providers) >= a:
            mat = costs.cost_matrix(clients[:a], providers[:a], cost_mode, run_seed)
            return min_k_assignment(mat, a).total
    raise RuntimeError(f"no patient sample with {a} per side in {_RETRY_CAP} attempts")


def empirical_patient_denominator(
    a_grid: Sequence[int],
    cost_mode: RateModel,
    base_seed: int,
    reps: int,
    *,
    jobs: int = 1,
) -> EmpiricalPatient:
    """Mean patient cost at each match count, from matched-horizon runs.

    Each sample runs arrivals to the horizon 2A + 4*sqrt(A) and prices the
    optimal A-assignment over the first A arrivals on each side, so numerator
    and denominator compare equal match counts over equally aged pools.
    Costs never influence the (rare) short-pool retries, so the retries do
    not bias the mean.
    """
    if reps < 1:
        raise ValueError("need reps >= 1")
    if not isinstance(cost_mode, RateModel):
        raise TypeError("empirical denominator needs a pair-cost rate model")
    a_grid = tuple(int(a) for a in a_grid)
    if any(a < 1 for a in a_grid) or list(a_grid) != sorted(set(a_grid)):
        raise ValueError("a_grid must be sorted, unique, and >= 1")
    tasks = []
    for pos, a in enumerate(a_grid):
        a_base = _rng.derive_seed(base_seed, pos)
        tasks.extend((a, cost_mode, _rng.derive_seed(a_base, r)) for r in range(reps))
    if jobs > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(processes=jobs) as pool:
            totals = pool.map(_patient_mean_worker, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))
    else:
        totals = [_patient_mean_worker(t) for t in tasks]
    means = []
    for pos, a in enumerate(a_grid):
        block = totals[pos * reps : (pos + 1) * reps]
        means.append((a, math.fsum(block) / reps))
    return EmpiricalPatient(means=tuple(means))


def _mean_stderr(values: List[float]) -> Tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def matching_ratio(
    traces: Sequence[RunTrace],
    a_grid: Sequence[int],
    denominator: DenominatorSource = AnalyticEqualSided(),
) -> List[RatioEstimate]:
    """alpha-hat over the match-count grid: mean cumulative cost / patient cost."""
    if not traces:
        raise ValueError("need at least one trace")
    a_grid = tuple(int(a) for a in a_grid)
    if any(a < 1 for a in a_grid) or list(a_grid) != sorted(set(a_grid)):
        raise ValueError("a_grid must be sorted, unique, and >= 1")
    out = []
    for a in a_grid:
        values = []
        deficient = []
        for rep, trace in enumerate(traces):
            try:
                values.append(trace.cost_at_match(a))
            except LookupError:
                deficient.append(rep)
        if deficient:
            raise CoverageError(
                f"{len(deficient)} of {len(traces)} replications never reach "
                f"match {a} (reps {deficient[:10]}...)",
                deficient,
            )
        den = denominator.value(a)
        mean, se = _mean_stderr(values)
        out.append(RatioEstimate(float(a), mean / den, se / den, denominator.tag))
    return out


def waiting_ratio(
    traces: Sequence[RunTrace],
    tau_grid: Sequence[float],
) -> List[RatioEstimate]:
    """beta-hat over the clock grid: mean waiting integral / (2/3) tau^(3/2).

    tau = 0 has a 0/0 ratio and is dropped from the output.
    """
    if not traces:
        raise ValueError("need at least one trace")
    tau_grid = tuple(float(t) for t in tau_grid)
    if any(t < 0.0 for t in tau_grid) or list(tau_grid) != sorted(set(tau_grid)):
        raise ValueError("tau_grid must be sorted, unique, and non-negative")
    out = []
    for tau in tau_grid:
        if tau == 0.0:
            continue
        values = []
        deficient = []
        for rep, trace in enumerate(traces):
            try:
                values.append(trace.wait_at(tau))
            except LookupError:
                deficient.append(rep)
        if deficient:
            raise CoverageError(
                f"{len(deficient)} of {len(traces)} replications stop before "
                f"tau {tau} (reps {deficient[:10]}...)",
                deficient,
            )
        den = oracles.greedy_expected_wait(tau)
        mean, se = _mean_stderr(values)
        out.append(RatioEstimate(tau, mean / den, se / den, "analytic"))
    return out


def fit_growth(points: Sequence[Tuple[float, float]], transform: str) -> GrowthFit:
    """Ordinary least squares on transformed coordinates."""
    if transform not in _TRANSFORMS:
        raise ValueError(f"unknown transform {transform!r}")
    if len(points) < 4:
        raise ValueError("growth fits need at least 4 points")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(np.diff(xs) <= 0.0):
        raise ValueError("x must be strictly increasing")
    if transform in (LOG_LOG, SEMILOG_X):
        if np.any(xs <= 0.0):
            raise ValueError("log transform needs positive x")
        xs = np.log(xs)
    if transform == LOG_LOG:
        if np.any(ys <= 0.0):
            raise ValueError("log transform needs positive y")
        ys = np.log(ys)
    n = len(points)
    x_mean = xs.mean()
    y_mean = ys.mean()
    sxx = float(np.sum((xs - x_mean) ** 2))
    slope = float(np.sum((xs - x_mean) * (ys - y_mean)) / sxx)
    intercept = y_mean - slope * x_mean
    resid = ys - (intercept + slope * xs)
    ssr = float(np.sum(resid ** 2))
    sst = float(np.sum((ys - y_mean) ** 2))
    se = math.sqrt(ssr / (n - 2) / sxx)
    r2 = 1.0 - ssr / sst if sst > 0.0 else (1.0 if ssr < 1e-24 else 0.0)
    return GrowthFit(
        transform=transform, slope=slope, intercept=intercept,
        slope_stderr=se, r2=r2, n_points=n,
    )


def write_ratio_csv(path: str, estimates: Sequence[RatioEstimate], config_hash: str) -> None:
    """CSV table `x,ratio,stderr,denominator` with the config hash on a comment line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config {config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "ratio", "stderr", "denominator"])
        for est in estimates:
            writer.writerow([repr(est.x), repr(est.ratio), repr(est.stderr), est.denominator])


def write_fits_json(path: str, fits: Mapping[str, GrowthFit], config_hash: str) -> None:
    payload: Dict[str, object] = {"config": config_hash, "fits": {}}
    for name, fit in fits.items():
        payload["fits"][name] = {
            "transform": fit.transform,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "slope_stderr": fit.slope_stderr,
            "r2": fit.r2,
            "n_points": fit.n_points,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
