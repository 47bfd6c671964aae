"""Match-cost rates and reproducible exponential cost draws.

A rate model assigns every client-provider pair a rate lambda_ij inside
[lam_under, lam_over]; the realized match cost of the pair is an exponential
draw with that rate.  Both quantities are pure functions of
(client_id, provider_id, model, run_seed), so queries are order-independent
and repeatable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng

__all__ = [
    "RateModel",
    "PairCost",
    "rate_of",
    "draw_pair_cost",
    "pair_cost",
    "min_of_exponentials_mean",
    "rate_matrix",
    "cost_matrix",
    "pair_cost_at_event",
    "cost_matrix_at_event",
]

CONSTANT = "constant"
UNIFORM_IID = "uniform_iid"
PRODUCT_FORM = "product_form"

_MODES = (CONSTANT, UNIFORM_IID, PRODUCT_FORM)


@dataclass(frozen=True)
class RateModel:
    """Law of the pair rates lambda_ij.

    mode
        "constant": every pair has rate lam_mean.
        "uniform_iid": rates i.i.d. uniform on [lam_under, lam_over].
        "product_form": one bounded factor per agent, drawn uniformly on
        [sqrt(lam_under), sqrt(lam_over)] at agent creation;
        lambda_ij = clamp(factor_i * factor_j, lam_under, lam_over).
    """

    mode: str
    lam_under: float
    lam_over: float
    lam_mean: float

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"unknown rate mode {self.mode!r}")
        if not (self.lam_under > 0.0 and math.isfinite(self.lam_under)):
            raise ValueError("lam_under must be positive and finite")
        if self.lam_under > self.lam_over:
            raise ValueError("lam_under must not exceed lam_over")
        if not (self.lam_under <= self.lam_mean <= self.lam_over):
            raise ValueError("lam_mean must lie in [lam_under, lam_over]")
        if self.mode == CONSTANT and not (
            self.lam_under == self.lam_mean == self.lam_over
        ):
            raise ValueError("constant mode requires lam_under = lam_mean = lam_over")

    @classmethod
    def constant(cls, lam: float) -> "RateModel":
        return cls(CONSTANT, lam, lam, lam)

    @classmethod
    def uniform_iid(cls, lam_under: float, lam_over: float) -> "RateModel":
        return cls(UNIFORM_IID, lam_under, lam_over, 0.5 * (lam_under + lam_over))

    @classmethod
    def product_form(cls, lam_under: float, lam_over: float) -> "RateModel":
        if lam_under <= 0.0:
            raise ValueError("lam_under must be positive")
        mean_factor = 0.5 * (math.sqrt(lam_under) + math.sqrt(lam_over))
        return cls(PRODUCT_FORM, lam_under, lam_over, mean_factor * mean_factor)


@dataclass(frozen=True)
class PairCost:
    client_id: int
    provider_id: int
    rate: float
    cost: float


def _factor(agent_id: int, salt: int, model: RateModel, run_seed: int) -> float:
    lo = math.sqrt(model.lam_under)
    hi = math.sqrt(model.lam_over)
    u = _rng.u01(_rng.key1(_rng.stream_base(run_seed, salt), agent_id))
    return lo + (hi - lo) * u


def rate_of(client_id: int, provider_id: int, model: RateModel, run_seed: int) -> float:
    """Rate lambda_ij of the pair, inside [lam_under, lam_over]."""
    if model.mode == CONSTANT:
        return model.lam_mean
    if model.mode == UNIFORM_IID:
        base = _rng.stream_base(run_seed, _rng.SALT_RATE)
        u = _rng.u01(_rng.key2(base, client_id, provider_id))
        return model.lam_under + (model.lam_over - model.lam_under) * u
    fc = _factor(client_id, _rng.SALT_FACTOR_CLIENT, model, run_seed)
    fp = _factor(provider_id, _rng.SALT_FACTOR_PROVIDER, model, run_seed)
    return min(max(fc * fp, model.lam_under), model.lam_over)


def draw_pair_cost(
    client_id: int, provider_id: int, model: RateModel, run_seed: int
) -> float:
    """Realized match cost w_ij, an exponential with rate rate_of(...)."""
    base = _rng.stream_base(run_seed, _rng.SALT_COST)
    u = _rng.u01(_rng.key2(base, client_id, provider_id))
    return -math.log(u) / rate_of(client_id, provider_id, model, run_seed)


def pair_cost(
    client_id: int, provider_id: int, model: RateModel, run_seed: int
) -> PairCost:
    """Rate and cost of one pair as a record."""
    return PairCost(
        client_id,
        provider_id,
        rate_of(client_id, provider_id, model, run_seed),
        draw_pair_cost(client_id, provider_id, model, run_seed),
    )


def min_of_exponentials_mean(rates) -> float:
    """Exact expectation of the minimum of independent exponentials.

    For rates lambda_1..lambda_n the minimum is exponential with the summed
    rate, so its mean is 1 / sum(rates).
    """
    rates = list(rates)
    if not rates:
        raise ValueError("need at least one rate")
    if any(not (r > 0.0) for r in rates):
        raise ValueError("rates must be positive")
    return 1.0 / math.fsum(rates)


def _factors_np(ids: np.ndarray, salt: int, model: RateModel, run_seed: int) -> np.ndarray:
    lo = math.sqrt(model.lam_under)
    hi = math.sqrt(model.lam_over)
    u = _rng.u01_np(_rng.keys1_np(_rng.stream_base(run_seed, salt), ids))
    return lo + (hi - lo) * u


def rate_matrix(
    client_ids: np.ndarray, provider_ids: np.ndarray, model: RateModel, run_seed: int
) -> np.ndarray:
    """Rates for the cartesian product, shape (len(clients), len(providers))."""
    client_ids = np.asarray(client_ids, dtype=np.uint64)
    provider_ids = np.asarray(provider_ids, dtype=np.uint64)
    shape = (client_ids.size, provider_ids.size)
    if model.mode == CONSTANT:
        return np.full(shape, model.lam_mean)
    if model.mode == UNIFORM_IID:
        base = _rng.stream_base(run_seed, _rng.SALT_RATE)
        u = _rng.u01_np(_rng.keys2_outer_np(base, client_ids, provider_ids))
        return model.lam_under + (model.lam_over - model.lam_under) * u
    fc = _factors_np(client_ids, _rng.SALT_FACTOR_CLIENT, model, run_seed)
    fp = _factors_np(provider_ids, _rng.SALT_FACTOR_PROVIDER, model, run_seed)
    return np.clip(np.outer(fc, fp), model.lam_under, model.lam_over)


def cost_matrix(
    client_ids: np.ndarray, provider_ids: np.ndarray, model: RateModel, run_seed: int
) -> np.ndarray:
    """Cost draws for the cartesian product; equals draw_pair_cost entrywise."""
    return cost_matrix_at_event(client_ids, provider_ids, model, run_seed, run_seed)


def pair_cost_at_event(
    client_id: int, provider_id: int, model: RateModel, run_seed: int, event_seed: int
) -> float:
    """Cost draw keyed by a clearing-event seed, at the run's structural rate.

    With event_seed == run_seed this is exactly draw_pair_cost; later events
    pass their own seeds so minima taken at distinct events stay independent.
    """
    base = _rng.stream_base(event_seed, _rng.SALT_COST)
    u = _rng.u01(_rng.key2(base, client_id, provider_id))
    return -math.log(u) / rate_of(client_id, provider_id, model, run_seed)


def cost_matrix_at_event(
    client_ids: np.ndarray,
    provider_ids: np.ndarray,
    model: RateModel,
    run_seed: int,
    event_seed: int,
) -> np.ndarray:
    """Matrix analogue of pair_cost_at_event."""
    client_ids = np.asarray(client_ids, dtype=np.uint64)
    provider_ids = np.asarray(provider_ids, dtype=np.uint64)
    base = _rng.stream_base(event_seed, _rng.SALT_COST)
    u = _rng.u01_np(_rng.keys2_outer_np(base, client_ids, provider_ids))
    return -np.log(u) / rate_matrix(client_ids, provider_ids, model, run_seed)
