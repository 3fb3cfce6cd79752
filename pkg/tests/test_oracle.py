import numpy as np
import pytest

from feedmix import EmptyGrid, GridSpec, InfeasibleScenario, Solution, Status, certify, grid_search, objective
from feedmix.model import Regime
from feedmix.oracle import batch_objective
import scenarios as gen
from scenarios import sym

U = None


def sol_at(x, s):
    x = np.asarray(x, dtype=float)
    return Solution(x, objective(x, s), Status.NUMERIC_BEST_EFFORT, Regime.GENERAL)


def test_single():
    sol = grid_search(sym([2], [1], [0], [1], [U], 4))
    assert sol.x[0] == 2
    assert sol.info["evaluated"] == 1


def test_linear_vertex():
    s = sym([1, 1], [1, 2], [0, 0], [1, 1], [U, U], 1)
    sol = grid_search(s)
    np.testing.assert_allclose(sol.x, [1, 0], atol=1e-12)
    assert sol.objective == pytest.approx(2, rel=1e-12)


def test_symmetric_scarcity():
    s = sym([1, 1], [1, 1], [0, 0], [1, 1], [10, 10], 2)
    sol = grid_search(s)
    np.testing.assert_allclose(sol.x, [1, 1], atol=1e-6)


def test_certify():
    s = sym([1, 1], [1, 1], [0, 0], [1, 1], [10, 10], 2)
    assert certify(sol_at([1, 1], s), s)
    assert not certify(sol_at([1.1, 0.9], s), s, rel_tol=1e-6)
    ref = grid_search(s)
    assert certify(ref, s)


def test_history_monotone_and_deterministic():
    rng = np.random.default_rng(0)
    for _ in range(10):
        s = gen.general(rng, int(rng.integers(2, 5)), 2.0)
        a = grid_search(s)
        h = a.info["history"]
        assert len(h) == 4
        assert all(y <= x for x, y in zip(h, h[1:]))
        b = grid_search(s)
        assert a.x.tobytes() == b.x.tobytes()


def test_batch_matches_objective():
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = gen.random_scenario(rng, 3, r=float(rng.choice([0.5, 1.0, 3.0])), unbounded_p=0.3)
        cap = np.where(s.bounded, s.capacity, 10.0)
        X = cap * rng.uniform(0, 0.9, (5, 3))
        np.testing.assert_allclose(batch_objective(X, s), [objective(x, s) for x in X], rtol=1e-12)


def test_empty_grid_without_existence():
    s = sym([1, 1], [0, 0], [0, 0], [1, 1], [1, 1], 5)
    with pytest.raises(InfeasibleScenario):
        grid_search(s)
    with pytest.raises(EmptyGrid):
        grid_search(s, check_existence=False)


def test_too_many():
    with pytest.raises(ValueError):
        grid_search(sym([1] * 5, [1] * 5, [0] * 5, [1] * 5, [U] * 5, 1))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(points_per_axis=2)
    assert GridSpec().points_for(2) == 2001
    assert GridSpec(points_per_axis=11).points_for(3) == 11


def test_solutions_feasible():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = gen.general(rng, int(rng.integers(1, 5)), 0.5)
        x = grid_search(s).x
        assert np.all(x >= 0)
        assert abs(s.lam @ x - s.Q) <= 1e-9 * s.Q
        assert np.all(s.mu * x < s.W)
