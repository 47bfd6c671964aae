import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynaclear.assignment import (
    Assignment,
    brute_force_k_assignment,
    fcfs_pairs,
    min_edge,
    min_k_assignment,
)


@st.composite
def matrices(draw, max_dim=6):
    n = draw(st.integers(1, max_dim))
    m = draw(st.integers(1, max_dim))
    vals = draw(
        st.lists(
            st.floats(0.0, 100.0, allow_nan=False, allow_infinity=False),
            min_size=n * m,
            max_size=n * m,
        )
    )
    return np.array(vals, dtype=np.float64).reshape(n, m)


def test_min_edge_single_entry():
    assert min_edge([[5.0]]) == (0, 0, 5.0)


def test_min_edge_picks_global_minimum():
    assert min_edge([[3.0, 1.0], [2.0, 5.0]]) == (0, 1, 1.0)


def test_min_edge_tie_breaks_by_row_then_column():
    assert min_edge([[1.0, 1.0], [1.0, 1.0]]) == (0, 0, 1.0)
    assert min_edge([[2.0, 1.0], [1.0, 2.0]]) == (0, 1, 1.0)


def test_min_edge_rejects_degenerate_input():
    with pytest.raises(ValueError):
        min_edge(np.empty((0, 3)))
    with pytest.raises(ValueError):
        min_edge([[1.0, -2.0]])
    with pytest.raises(ValueError):
        min_edge([[1.0, math.inf]])


def test_min_k_assignment_examples():
    assert min_k_assignment([[7.0]], 1).total == 7.0
    best = min_k_assignment([[1.0, 2.0], [3.0, 0.0]], 2)
    assert best.total == 1.0
    assert set(best.pairs) == {(0, 0), (1, 1)}


def test_min_k_assignment_range_checks():
    with pytest.raises(ValueError):
        min_k_assignment([[1.0, 2.0]], 2)
    with pytest.raises(ValueError):
        min_k_assignment([[1.0]], 0)


def test_brute_force_examples():
    assert brute_force_k_assignment([[7.0]], 1).total == 7.0
    assert brute_force_k_assignment([[0.0, 1.0], [1.0, 0.0]], 2).total == 0.0


def test_brute_force_three_by_two():
    # six selections: 4+9, 2+1, 4+3, 2+3, 1+3, 9+3; cheapest is 1+2 = 3
    best = brute_force_k_assignment([[4.0, 2.0], [1.0, 9.0], [3.0, 3.0]], 2)
    assert best.total == 3.0
    assert set(best.pairs) == {(1, 0), (0, 1)}


def test_brute_force_refuses_large_matrices():
    with pytest.raises(ValueError):
        brute_force_k_assignment(np.ones((9, 2)), 2)
    with pytest.raises(ValueError):
        brute_force_k_assignment(np.ones((2, 9)), 2)


def test_assignment_record_rejects_reuse():
    with pytest.raises(ValueError):
        Assignment(((0, 0), (0, 1)), 2.0)
    with pytest.raises(ValueError):
        Assignment(((0, 0), (1, 0)), 2.0)
    with pytest.raises(ValueError):
        Assignment(((0, 0),), math.nan)


@given(matrices())
@settings(max_examples=300)
def test_solver_agrees_with_brute_force(mat):
    for k in range(1, min(mat.shape) + 1):
        fast = min_k_assignment(mat, k)
        slow = brute_force_k_assignment(mat, k)
        assert len(fast.pairs) == k
        assert math.isclose(fast.total, slow.total, rel_tol=1e-12, abs_tol=1e-12)


@given(matrices())
def test_solver_total_recomputes_from_pairs(mat):
    k = min(mat.shape)
    best = min_k_assignment(mat, k)
    resum = math.fsum(float(mat[i, j]) for i, j in best.pairs)
    assert math.isclose(best.total, resum, rel_tol=0.0, abs_tol=1e-12)


@given(matrices())
def test_solver_total_is_monotone_in_k(mat):
    totals = [
        min_k_assignment(mat, k).total for k in range(1, min(mat.shape) + 1)
    ]
    assert all(b >= a - 1e-12 for a, b in zip(totals, totals[1:]))


@given(matrices(), st.integers(0, 10**6), st.floats(0.001, 50.0))
@settings(max_examples=150)
def test_raising_one_entry_never_helps(mat, pos, delta):
    k = min(mat.shape)
    base = min_k_assignment(mat, k).total
    bumped = mat.copy()
    i, j = pos % mat.shape[0], (pos // mat.shape[0]) % mat.shape[1]
    bumped[i, j] += delta
    assert min_k_assignment(bumped, k).total >= base - 1e-9


def test_min_edge_equals_one_assignment():
    rng = np.random.default_rng(88)
    for _ in range(200):
        mat = rng.exponential(size=(rng.integers(1, 7), rng.integers(1, 7)))
        _, _, cost = min_edge(mat)
        assert cost == min_k_assignment(mat, 1).total


def test_square_exponential_mean_small_case():
    # mean optimal 3-assignment of 3x3 exp(1) entries: 1 + 1/4 + 1/9
    rng = np.random.default_rng(3030)
    reps = 20_000
    totals = np.array(
        [min_k_assignment(rng.exponential(size=(3, 3)), 3).total for _ in range(reps)]
    )
    se = totals.std(ddof=1) / math.sqrt(reps)
    assert abs(totals.mean() - (1.0 + 0.25 + 1.0 / 9.0)) <= 3.0 * se


def test_fcfs_pairs_heads_of_both_queues():
    assert fcfs_pairs(["a"], ["b"]) == ("a", "b")
    assert fcfs_pairs(["a", "c"], ["b"]) == ("a", "b")


def test_fcfs_pairs_empty_side_raises():
    with pytest.raises(ValueError, match="client"):
        fcfs_pairs([], ["b"])
    with pytest.raises(ValueError, match="provider"):
        fcfs_pairs(["a"], [])


def test_fcfs_repeated_application_drains_in_arrival_order():
    from collections import deque

    clients = deque(f"c{i}" for i in range(5))
    providers = deque(f"p{i}" for i in range(5))
    seen = []
    while clients and providers:
        c, p = fcfs_pairs(clients, providers)
        seen.append((c, p))
        clients.popleft()
        providers.popleft()
    assert seen == [(f"c{i}", f"p{i}") for i in range(5)]
