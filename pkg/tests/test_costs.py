"""Pair-rate and cost-draw laws: determinism, bounds, and sample statistics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynaclear.costs import (
    RateModel,
    cost_matrix,
    cost_matrix_at_event,
    draw_pair_cost,
    min_of_exponentials_mean,
    pair_cost,
    pair_cost_at_event,
    rate_matrix,
    rate_of,
)

agent_ids = st.integers(min_value=1, max_value=10**9)
seeds = st.integers(min_value=0, max_value=2**62)

MODELS = [
    RateModel.constant(1.0),
    RateModel.constant(2.5),
    RateModel.uniform_iid(0.5, 2.0),
    RateModel.product_form(0.5, 2.0),
]


def test_constant_rate_is_the_mean():
    model = RateModel.constant(1.0)
    assert rate_of(3, 7, model, 42) == 1.0
    assert rate_of(999, 1, model, 0) == 1.0


def test_rate_model_validation():
    with pytest.raises(ValueError):
        RateModel.uniform_iid(2.0, 1.0)
    with pytest.raises(ValueError):
        RateModel.uniform_iid(0.0, 1.0)
    with pytest.raises(ValueError):
        RateModel("constant", 1.0, 2.0, 1.5)
    with pytest.raises(ValueError):
        RateModel("bogus", 1.0, 2.0, 1.5)
    with pytest.raises(ValueError):
        RateModel("uniform_iid", 1.0, 2.0, 3.0)


@given(c=agent_ids, p=agent_ids, seed=seeds, model=st.sampled_from(MODELS))
def test_rate_and_cost_are_pure_functions(c, p, seed, model):
    assert rate_of(c, p, model, seed) == rate_of(c, p, model, seed)
    assert draw_pair_cost(c, p, model, seed) == draw_pair_cost(c, p, model, seed)


@given(c=agent_ids, p=agent_ids, seed=seeds, model=st.sampled_from(MODELS))
def test_rates_stay_inside_declared_bounds(c, p, seed, model):
    lam = rate_of(c, p, model, seed)
    assert model.lam_under <= lam <= model.lam_over


@given(c=agent_ids, p=agent_ids, seed=seeds, model=st.sampled_from(MODELS))
def test_costs_are_positive(c, p, seed, model):
    assert draw_pair_cost(c, p, model, seed) > 0.0


def test_pair_cost_record_is_consistent():
    model = RateModel.uniform_iid(0.5, 2.0)
    rec = pair_cost(11, 22, model, 77)
    assert rec.rate == rate_of(11, 22, model, 77)
    assert rec.cost == draw_pair_cost(11, 22, model, 77)
    assert rec.client_id == 11 and rec.provider_id == 22


def _distinct_pair_grid(n_rows=320, n_cols=320):
    clients = np.arange(1, n_rows + 1, dtype=np.uint64)
    providers = np.arange(10**6, 10**6 + n_cols, dtype=np.uint64)
    return clients, providers


def test_uniform_rate_sample_mean():
    clients, providers = _distinct_pair_grid()
    rates = rate_matrix(clients, providers, RateModel.uniform_iid(0.5, 2.0), 2024)
    assert abs(rates.mean() - 1.25) <= 0.01


def test_unit_rate_cost_sample_mean():
    clients, providers = _distinct_pair_grid()
    draws = cost_matrix(clients, providers, RateModel.constant(1.0), 2024)
    assert abs(draws.mean() - 1.0) <= 0.02


def test_double_rate_cost_sample_mean():
    clients, providers = _distinct_pair_grid()
    draws = cost_matrix(clients, providers, RateModel.constant(2.0), 2024)
    assert abs(draws.mean() - 0.5) <= 0.01


def test_rate_scaling_matches_unit_rate_law():
    # Exp(lam) must look like Exp(1)/lam: compare first two sample moments.
    clients, providers = _distinct_pair_grid()
    unit = cost_matrix(clients, providers, RateModel.constant(1.0), 31)
    scaled = cost_matrix(clients, providers, RateModel.constant(4.0), 32) * 4.0
    n = unit.size
    se_mean = math.sqrt(2.0 / n)  # var of exp(1) is 1, two independent samples
    assert abs(unit.mean() - scaled.mean()) <= 3.0 * se_mean
    se_var = math.sqrt(2.0 * 8.0 / n)  # var of exp(1)^2 moments, generous
    assert abs(unit.var() - scaled.var()) <= 3.0 * se_var


def test_unit_cost_draws_pass_kolmogorov_smirnov():
    clients, providers = _distinct_pair_grid()
    draws = np.sort(cost_matrix(clients, providers, RateModel.constant(1.0), 99).ravel())
    n = draws.size
    cdf = 1.0 - np.exp(-draws)
    grid = np.arange(1, n + 1) / n
    dist = max(np.abs(cdf - grid).max(), np.abs(cdf - (grid - 1.0 / n)).max())
    assert dist < 0.01


def test_matrix_draws_equal_scalar_draws():
    model = RateModel.product_form(0.5, 2.0)
    clients = [2, 5, 9]
    providers = [4, 5]
    mat = cost_matrix(clients, providers, model, 123)
    for i, c in enumerate(clients):
        for j, p in enumerate(providers):
            assert mat[i, j] == draw_pair_cost(c, p, model, 123)


def test_event_seed_equal_to_run_seed_reproduces_base_draws():
    model = RateModel.uniform_iid(0.5, 2.0)
    assert pair_cost_at_event(3, 8, model, 55, 55) == draw_pair_cost(3, 8, model, 55)
    mat = cost_matrix_at_event([1, 2], [3, 4], model, 55, 55)
    np.testing.assert_array_equal(mat, cost_matrix([1, 2], [3, 4], model, 55))


def test_event_draws_are_fresh_but_keep_the_rate():
    model = RateModel.uniform_iid(0.5, 2.0)
    first = pair_cost_at_event(3, 8, model, 55, 55)
    second = pair_cost_at_event(3, 8, model, 55, 56)
    assert first != second
    # both draws price the same structural rate, so their ratio is the
    # ratio of the underlying uniforms, never a rate change
    lam = rate_of(3, 8, model, 55)
    assert math.exp(-first * lam) <= 1.0 and math.exp(-second * lam) <= 1.0


def test_min_of_exponentials_mean_exact_values():
    assert min_of_exponentials_mean([1.0]) == 1.0
    assert min_of_exponentials_mean([1.0] * 4) == 0.25
    assert abs(min_of_exponentials_mean([1.0, 2.0, 3.0]) - 1.0 / 6.0) < 1e-15


def test_min_of_exponentials_mean_rejects_bad_input():
    with pytest.raises(ValueError):
        min_of_exponentials_mean([])
    with pytest.raises(ValueError):
        min_of_exponentials_mean([1.0, 0.0])
    with pytest.raises(ValueError):
        min_of_exponentials_mean([1.0, -2.0])


@pytest.mark.parametrize(
    "rates", [[1.0], [0.3, 0.9], [1.0, 2.0, 3.0], [0.5] * 10]
)
def test_min_of_exponentials_mean_against_monte_carlo(rates):
    rng = np.random.default_rng(4000 + len(rates))
    n = 10**6
    draws = rng.exponential(1.0 / np.asarray(rates), size=(n, len(rates)))
    mins = draws.min(axis=1)
    se = mins.std(ddof=1) / math.sqrt(n)
    assert abs(mins.mean() - min_of_exponentials_mean(rates)) <= 3.0 * se
