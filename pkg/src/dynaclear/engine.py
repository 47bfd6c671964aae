"""Discrete-event loop for the matching market.

Arrivals stream in over a rate-1 clock; the schedule decides when a couple is
matched; the waiting integral of the unmatched count is accrued exactly
between events.  Costs come either from the exponential pair-cost model or
from a count-decay law.

Each clearing event draws its own fresh costs, keyed by event_seed(run_seed,
k).  The first event reuses the run seed itself, so runs with a single
clearing event (hand tapes, the patient terminal assignment) see exactly the
canonical per-pair draws of the cost model.  Above SEAM_PAIRS present pairs
the engine samples the minimum-cost couple from the exact exponential-minimum
law instead of materializing the matrix; both paths realize the same
distribution and the switch depends only on pool sizes, so runs stay
deterministic in the seed.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _rng, costs
from .arrivals import PoissonStream
from .assignment import fcfs_pairs, min_k_assignment
from .costs import CONSTANT, RateModel
from .schedules import FCFS, PATIENT, ScheduleSpec, threshold

__all__ = [
    "SEAM_PAIRS",
    "Horizon",
    "MatchTarget",
    "DecayModel",
    "MatchRecord",
    "RunSummary",
    "RunTrace",
    "run",
    "run_ensemble",
]

_ARRIVAL_CAP = 10 ** 9
_PATIENT_ENTRY_CAP = 250_000
_PATIENT_RETRY_CAP = 64

SEAM_PAIRS = 256


@dataclass(frozen=True)
class Horizon:
    """Stop once the clock passes tau_max."""

    tau_max: float

    def __post_init__(self) -> None:
        if not (self.tau_max > 0.0 and math.isfinite(self.tau_max)):
            raise ValueError("tau_max must be positive and finite")


@dataclass(frozen=True)
class MatchTarget:
    """Stop the instant the a_max-th match fires."""

    a_max: int

    def __post_init__(self) -> None:
        if self.a_max < 1:
            raise ValueError("a_max must be at least 1")


@dataclass(frozen=True)
class DecayModel:
    """Count-decay cost law: an event with pools (x, y) costs scale/min(x,y)^delta.

    `fn` swaps in another functional form of the two counts; the default is
    the min-power law.  Only delta > 1 keeps cumulative cost summable.
    """

    delta: float
    scale: float = 1.0
    fn: Optional[Callable[[int, int], float]] = None

    def __post_init__(self) -> None:
        if not (self.delta > 1.0 and math.isfinite(self.delta)):
            raise ValueError("delta must exceed 1")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")

    def cost(self, m_c: int, m_p: int) -> float:
        if self.fn is not None:
            return self.fn(m_c, m_p)
        return self.scale / min(m_c, m_p) ** self.delta


CostMode = Union[RateModel, DecayModel]
StopRule = Union[Horizon, MatchTarget]


@dataclass(frozen=True)
class MatchRecord:
    k: int
    time: float
    client_id: int
    provider_id: int
    cost: float
    m_c: int
    m_p: int


@dataclass(frozen=True)
class RunSummary:
    tau: float
    n_c: int
    n_p: int
    a: int
    wait_integral: float
    total_cost: float
    seed: int
    schedule: str
    mode: str
    retries: int = 0


@dataclass
class RunTrace:
    """Everything one replication produced.

    a_grid_costs / tau_grid_waits are exact captures taken while the run was
    live; they let ensemble runs skip per-match records entirely.
    """

    records: List[MatchRecord]
    wait_checkpoints: List[Tuple[float, float]]
    summary: RunSummary
    a_grid: Tuple[int, ...] = ()
    a_grid_costs: Tuple[float, ...] = ()
    tau_grid: Tuple[float, ...] = ()
    tau_grid_waits: Tuple[float, ...] = ()
    _cum: Optional[List[float]] = field(default=None, repr=False, compare=False)

    def cum_costs(self) -> List[float]:
        """Prefix sums of record costs, in the engine's accumulation order."""
        if self._cum is None:
            total = 0.0
            out = []
            for r in self.records:
                total += r.cost
                out.append(total)
            self._cum = out
        return self._cum

    def cost_at_match(self, a: int) -> float:
        if a >= 1:
            try:
                return self.a_grid_costs[self.a_grid.index(a)]
            except (ValueError, IndexError):
                pass
            if a <= len(self.records):
                return self.cum_costs()[a - 1]
        raise LookupError(f"run reached {self.summary.a} matches, asked for {a}")

    def wait_at(self, tau: float) -> float:
        if tau == 0.0:
            return 0.0
        try:
            return self.tau_grid_waits[self.tau_grid.index(tau)]
        except (ValueError, IndexError):
            pass
        cps = self.wait_checkpoints
        if cps and 0.0 < tau <= cps[-1][0]:
            i = bisect_right(cps, (tau, math.inf))
            t1, w1 = cps[i - 1] if i >= 1 else (0.0, 0.0)
            if t1 == tau:
                return w1
            if i < len(cps):
                t0, w0 = cps[i - 1]
                t2, w2 = cps[i]
                return w0 + (w2 - w0) * (tau - t0) / (t2 - t0)
        raise LookupError(f"run covers tau <= {self.summary.tau}, asked for {tau}")


def _mode_label(mode: CostMode) -> str:
    if isinstance(mode, RateModel):
        return f"micro:{mode.mode}"
    return f"decay:{mode.delta:g}:{mode.scale:g}"


def _validate_grids(a_grid, tau_grid):
    a_grid = tuple(int(a) for a in a_grid) if a_grid else ()
    if any(a < 1 for a in a_grid) or list(a_grid) != sorted(set(a_grid)):
        raise ValueError("a_grid must be sorted, unique, and >= 1")
    tau_grid = tuple(float(t) for t in tau_grid) if tau_grid else ()
    if any(not t > 0.0 for t in tau_grid) or list(tau_grid) != sorted(set(tau_grid)):
        raise ValueError("tau_grid must be sorted, unique, and positive")
    return a_grid, tau_grid


def run(
    spec: ScheduleSpec,
    cost_mode: CostMode,
    stop: StopRule,
    seed: int,
    source=None,
    *,
    collect_costs: bool = True,
    collect_records: bool = True,
    collect_checkpoints: Optional[bool] = None,
    a_grid: Sequence[int] = (),
    tau_grid: Sequence[float] = (),
) -> RunTrace:
    """Simulate one replication.

    The trace is a pure function of (spec, cost_mode, stop, seed, source).
    collect_* flags and the capture grids only control what is materialized,
    except that collect_costs=False skips cost draws entirely (costs report
    as 0.0); use it for waiting-time ensembles where cost accounting at
    scale would dominate the runtime.
    """
    if not isinstance(spec, ScheduleSpec):
        raise TypeError("spec must be a ScheduleSpec")
    if not isinstance(cost_mode, (RateModel, DecayModel)):
        raise TypeError("cost_mode must be a RateModel or DecayModel")
    if not isinstance(stop, (Horizon, MatchTarget)):
        raise TypeError("stop must be Horizon or MatchTarget")
    if isinstance(cost_mode, DecayModel) and spec.kind in (PATIENT, FCFS):
        raise ValueError(f"decay cost mode is incompatible with {spec.kind}")
    if collect_checkpoints is None:
        collect_checkpoints = collect_records
    a_grid, tau_grid = _validate_grids(a_grid, tau_grid)
    if spec.kind == PATIENT:
        return _run_patient(
            spec, cost_mode, stop, seed, source,
            collect_costs, collect_records, collect_checkpoints, a_grid, tau_grid,
        )
    return _run_threshold(
        spec, cost_mode, stop, seed, source,
        collect_costs, collect_records, collect_checkpoints, a_grid, tau_grid,
    )


def _pick_index(u: float, n: int) -> int:
    i = int(u * n)
    return n - 1 if i >= n else i


def _run_threshold(
    spec, cost_mode, stop, seed, source,
    collect_costs, collect_records, collect_checkpoints, a_grid, tau_grid,
):
    micro = isinstance(cost_mode, RateModel)
    fifo = spec.kind == FCFS or not micro
    hetero = micro and collect_costs and cost_mode.mode != CONSTANT
    horizon = stop.tau_max if isinstance(stop, Horizon) else None
    target = stop.a_max if isinstance(stop, MatchTarget) else None
    src = source if source is not None else PoissonStream(seed)

    pool_c: Union[deque, list] = deque() if fifo else []
    pool_p: Union[deque, list] = deque() if fifo else []
    row_sums = {} if hetero else None

    clock = 0.0
    wait = 0.0
    n_c = n_p = a = 0
    cum = 0.0
    arrivals = 0
    records: List[MatchRecord] = []
    checkpoints: List[Tuple[float, float]] = [(0.0, 0.0)] if collect_checkpoints else []
    a_costs: List[float] = []
    tau_waits: List[float] = []
    t_pos = 0
    n_tau = len(tau_grid)
    a_pos = 0
    n_a = len(a_grid)
    need = threshold(spec, 1)
    done = False

    def advance(to_t: float) -> None:
        nonlocal clock, wait, t_pos
        r = len(pool_c) + len(pool_p)
        while t_pos < n_tau and clock < tau_grid[t_pos] <= to_t:
            tau_waits.append(wait + r * (tau_grid[t_pos] - clock))
            t_pos += 1
        wait += r * (to_t - clock)
        clock = to_t

    def clear_one() -> Tuple[int, int, float, int, int]:
        m_c = len(pool_c)
        m_p = len(pool_p)
        if not micro:
            cid, pid = fcfs_pairs(pool_c, pool_p)
            pool_c.popleft()
            pool_p.popleft()
            cost = cost_mode.cost(m_c, m_p) if collect_costs else 0.0
            return cid, pid, cost, m_c, m_p
        es = _rng.event_seed(seed, a)
        if fifo:
            cid, pid = fcfs_pairs(pool_c, pool_p)
            pool_c.popleft()
            pool_p.popleft()
            cost = (
                costs.pair_cost_at_event(cid, pid, cost_mode, seed, es)
                if collect_costs else 0.0
            )
            return cid, pid, cost, m_c, m_p
        if not collect_costs:
            return pool_c.pop(), pool_p.pop(), 0.0, m_c, m_p
        if m_c * m_p <= SEAM_PAIRS:
            mat = costs.cost_matrix_at_event(pool_c, pool_p, cost_mode, seed, es)
            flat = int(np.argmin(mat))
            i, j = flat // m_p, flat % m_p
            cost = float(mat[i, j])
        else:
            base = _rng.stream_base(es, _rng.SALT_PICK)
            u_row = _rng.u01(_rng.key1(base, 0))
            u_col = _rng.u01(_rng.key1(base, 1))
            u_cost = _rng.u01(_rng.key1(base, 2))
            if row_sums is None:
                i = _pick_index(u_row, m_c)
                j = _pick_index(u_col, m_p)
                total = cost_mode.lam_mean * m_c * m_p
            else:
                total = math.fsum(row_sums[c] for c in pool_c)
                acc = 0.0
                i = m_c - 1
                goal = u_row * total
                for pos, c in enumerate(pool_c):
                    acc += row_sums[c]
                    if acc >= goal:
                        i = pos
                        break
                row = costs.rate_matrix([pool_c[i]], pool_p, cost_mode, seed)[0]
                acc = 0.0
                j = m_p - 1
                goal = u_col * float(row.sum())
                for pos in range(m_p):
                    acc += row[pos]
                    if acc >= goal:
                        j = pos
                        break
            cost = -math.log(u_cost) / total
        cid = pool_c[i]
        pid = pool_p[j]
        if row_sums is not None:
            del row_sums[cid]
            col = costs.rate_matrix(pool_c, [pid], cost_mode, seed)[:, 0]
            for pos, c in enumerate(pool_c):
                if c != cid:
                    row_sums[c] -= float(col[pos])
        pool_c[i] = pool_c[-1]
        pool_c.pop()
        pool_p[j] = pool_p[-1]
        pool_p.pop()
        return cid, pid, cost, m_c, m_p

    while not done:
        times, sides = src.take_block()
        if not times:
            if horizon is None:
                raise RuntimeError("arrival source exhausted before the match target")
            if clock < horizon:
                advance(horizon)
            break
        for t, is_client in zip(times, sides):
            if horizon is not None and t > horizon:
                advance(horizon)
                done = True
                break
            advance(t)
            arrivals += 1
            if arrivals > _ARRIVAL_CAP:
                raise RuntimeError(f"runaway run: more than {_ARRIVAL_CAP} arrivals")
            if is_client:
                n_c += 1
                pool_c.append(arrivals)
                if row_sums is not None:
                    if pool_p:
                        r = costs.rate_matrix([arrivals], pool_p, cost_mode, seed)[0]
                        row_sums[arrivals] = float(r.sum())
                    else:
                        row_sums[arrivals] = 0.0
            else:
                n_p += 1
                pool_p.append(arrivals)
                if row_sums is not None and pool_c:
                    col = costs.rate_matrix(pool_c, [arrivals], cost_mode, seed)[:, 0]
                    for pos, c in enumerate(pool_c):
                        row_sums[c] += float(col[pos])
            if collect_checkpoints:
                checkpoints.append((clock, wait))
            while len(pool_c) >= need and len(pool_p) >= need:
                a += 1
                cid, pid, cost, m_c, m_p = clear_one()
                cum += cost
                if collect_records:
                    records.append(MatchRecord(a, clock, cid, pid, cost, m_c, m_p))
                if collect_checkpoints:
                    checkpoints.append((clock, wait))
                if a_pos < n_a and a == a_grid[a_pos]:
                    a_costs.append(cum)
                    a_pos += 1
                need = threshold(spec, a + 1)
                if target is not None and a == target:
                    done = True
                    break
            if done:
                break

    if collect_checkpoints and (not checkpoints or checkpoints[-1][0] != clock):
        checkpoints.append((clock, wait))
    summary = RunSummary(
        tau=clock, n_c=n_c, n_p=n_p, a=a, wait_integral=wait, total_cost=cum,
        seed=seed, schedule=spec.label(), mode=_mode_label(cost_mode),
    )
    return RunTrace(
        records, checkpoints, summary,
        a_grid=a_grid[: len(a_costs)], a_grid_costs=tuple(a_costs),
        tau_grid=tau_grid[: len(tau_waits)], tau_grid_waits=tuple(tau_waits),
    )


def _run_patient(
    spec, cost_mode, stop, seed, source,
    collect_costs, collect_records, collect_checkpoints, a_grid, tau_grid,
):
    if isinstance(stop, MatchTarget):
        target = stop.a_max
        tau_max = 2.0 * target + 4.0 * math.sqrt(target)
    else:
        target = None
        tau_max = stop.tau_max

    for attempt in range(_PATIENT_RETRY_CAP):
        run_seed = seed if attempt == 0 else _rng.derive_seed(seed, attempt)
        src = source if source is not None else PoissonStream(run_seed)
        pool_c: List[int] = []
        pool_p: List[int] = []
        clock = 0.0
        wait = 0.0
        arrivals = 0
        tau_waits: List[float] = []
        t_pos = 0
        n_tau = len(tau_grid)
        checkpoints: List[Tuple[float, float]] = [(0.0, 0.0)] if collect_checkpoints else []

        def advance(to_t: float) -> None:
            nonlocal clock, wait, t_pos
            r = len(pool_c) + len(pool_p)
            while t_pos < n_tau and clock < tau_grid[t_pos] <= to_t:
                tau_waits.append(wait + r * (tau_grid[t_pos] - clock))
                t_pos += 1
            wait += r * (to_t - clock)
            clock = to_t

        exhausted = False
        while True:
            times, sides = src.take_block()
            if not times:
                exhausted = True
                break
            stop_block = False
            for t, is_client in zip(times, sides):
                if t > tau_max:
                    stop_block = True
                    break
                advance(t)
                arrivals += 1
                if arrivals > _ARRIVAL_CAP:
                    raise RuntimeError(f"runaway run: more than {_ARRIVAL_CAP} arrivals")
                if is_client:
                    pool_c.append(arrivals)
                else:
                    pool_p.append(arrivals)
                if collect_checkpoints:
                    checkpoints.append((clock, wait))
            if stop_block or exhausted:
                break
        if clock < tau_max:
            advance(tau_max)

        n_c = len(pool_c)
        n_p = len(pool_p)
        k = min(n_c, n_p) if target is None else target
        if target is not None and min(n_c, n_p) < target:
            if source is not None:
                raise RuntimeError(
                    f"source provides min side {min(n_c, n_p)} < target {target}"
                )
            continue

        records: List[MatchRecord] = []
        total = 0.0
        a = 0
        a_costs: List[float] = []
        if collect_costs and k >= 1:
            if n_c * n_p > _PATIENT_ENTRY_CAP:
                raise ValueError(
                    f"patient terminal assignment over {n_c}x{n_p} pairs exceeds "
                    f"{_PATIENT_ENTRY_CAP} entries; rerun with collect_costs=False"
                )
            mat = costs.cost_matrix(pool_c, pool_p, cost_mode, run_seed)
            asn = min_k_assignment(mat, k)
            pairs = sorted(asn.pairs)
            cum = 0.0
            for idx, (i, j) in enumerate(pairs):
                cost = float(mat[i, j])
                cum += cost
                if collect_records:
                    records.append(
                        MatchRecord(
                            idx + 1, tau_max, pool_c[i], pool_p[j], cost,
                            n_c - idx, n_p - idx,
                        )
                    )
                if len(a_costs) < len(a_grid) and idx + 1 == a_grid[len(a_costs)]:
                    a_costs.append(cum)
            total = asn.total
            a = k

        if collect_checkpoints and (not checkpoints or checkpoints[-1][0] != tau_max):
            checkpoints.append((tau_max, wait))
        summary = RunSummary(
            tau=tau_max, n_c=n_c, n_p=n_p, a=a, wait_integral=wait,
            total_cost=total, seed=run_seed, schedule=spec.label(),
            mode=_mode_label(cost_mode), retries=attempt,
        )
        return RunTrace(
            records, checkpoints, summary,
            a_grid=a_grid[: len(a_costs)], a_grid_costs=tuple(a_costs),
            tau_grid=tau_grid[: len(tau_waits)], tau_grid_waits=tuple(tau_waits),
        )
    raise RuntimeError(
        f"patient run failed to reach {target} matches in {_PATIENT_RETRY_CAP} attempts"
    )


def _ensemble_worker(args):
    base_seed, rep, spec, cost_mode, stop, kwargs = args
    return run(spec, cost_mode, stop, _rng.derive_seed(base_seed, rep), **kwargs)


def run_ensemble(
    spec: ScheduleSpec,
    cost_mode: CostMode,
    stop: StopRule,
    base_seed: int,
    reps: int,
    *,
    jobs: int = 1,
    **run_kwargs,
) -> List[RunTrace]:
    """Independent replications on seeds derived from (base_seed, rep index).

    Results are ordered by replication index regardless of jobs, so every
    downstream aggregate is merge-order independent.
    """
    if reps < 1:
        raise ValueError("need reps >= 1")
    tasks = [(base_seed, r, spec, cost_mode, stop, run_kwargs) for r in range(reps)]
    if jobs > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(processes=jobs) as pool:
            return pool.map(_ensemble_worker, tasks, chunksize=max(1, reps // (4 * jobs)))
    return [_ensemble_worker(t) for t in tasks]
