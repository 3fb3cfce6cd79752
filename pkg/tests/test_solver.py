import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feedmix import (
    InfeasibleScenario,
    NonConvergence,
    Regime,
    Status,
    diagnose,
    feasible_point,
    grid_search,
    is_feasible,
    objective,
)
from feedmix.analytic import solve_analytic
from feedmix.solver import (
    SolverConfig,
    gradient,
    kkt_residual,
    project,
    projected_gradient,
    solve,
    solve_general,
)
import scenarios as gen
from scenarios import fd_gradient, sym

U = None


class TestGradient:
    def test_linear(self):
        s = sym([1, 1], [2, 3], [0, 0], [1, 1], [U, U], 1)
        np.testing.assert_array_equal(gradient([1.0, 1.0], s), [3, 4])

    def test_transport_term(self):
        s = sym([1], [1], [1], [1], [U], 1)
        # c + gamma*C*x^(gamma-1) + mu at x=4
        assert gradient([4.0], s)[0] == pytest.approx(2.25, rel=1e-15)

    def test_water_term(self):
        s = sym([1], [0], [0], [1], [10], 1)
        # mu * W^2 / (W - mu*x)^2 at x=5
        assert gradient([5.0], s)[0] == pytest.approx(4.0, rel=1e-15)

    def test_zero_clamped(self):
        s = sym([1], [0], [1], [1], [U], 1)
        assert math.isfinite(gradient([0.0], s)[0])

    def test_ces_pythagorean(self):
        # cost 3, water 4, F = 5; dF/da = 3/5, dF/db = 4/5
        s = sym([1], [3], [0], [4], [U], 1, r=2)
        assert gradient([1.0], s)[0] == pytest.approx(3 * 0.6 + 4 * 0.8, rel=1e-14)

    def test_against_mpmath(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            s = gen.random_scenario(rng, int(rng.integers(1, 5)), 1e-1, 1e1, r=float(rng.choice([0.5, 1, 2])))
            cap = np.where(s.bounded, s.capacity, 10.0)
            x = cap * rng.uniform(0.05, 0.9, s.n)
            g = gradient(x, s)
            np.testing.assert_allclose(g, fd_gradient(x, s), rtol=1e-6)

    def test_shape(self):
        with pytest.raises(ValueError):
            gradient([1.0, 2.0], sym([1], [0], [0], [1], [U], 1))


class TestKKT:
    def test_symmetric_scarcity(self):
        s = sym([1, 1], [1, 1], [0, 0], [1, 1], [10, 10], 2)
        res = kkt_residual([1.0, 1.0], s)
        assert res.max_abs == 0
        assert res.xi == pytest.approx(1 + 100 / 81, rel=1e-15)
        assert res.primal == 0

    def test_vertex(self):
        s = sym([1, 1], [1, 2], [0, 0], [1, 1], [U, U], 3)
        res = kkt_residual([3.0, 0.0], s)
        assert list(res.active) == [0]
        assert res.max_abs == 0
        assert res.xi == 2

    def test_primal(self):
        s = sym([1, 1], [1, 2], [0, 0], [1, 1], [U, U], 3)
        res = kkt_residual([1.0, 1.0], s)
        assert res.primal == 1
        assert res.max_abs == pytest.approx(0.5)


class TestProject:
    def test_already_feasible(self):
        lam = np.array([1.0, 2.0])
        np.testing.assert_allclose(project(np.array([1.0, 1.0]), lam, 3.0, np.array([np.inf, np.inf])), [1, 1])

    def test_simplex(self):
        x = project(np.array([2.0, 0.0]), np.ones(2), 1.0, np.full(2, np.inf))
        np.testing.assert_allclose(x, [1, 0])

    def test_box(self):
        x = project(np.array([5.0, 5.0]), np.ones(2), 3.0, np.array([1.0, np.inf]))
        np.testing.assert_allclose(x, [1, 2])

    def test_unreachable(self):
        with pytest.raises(InfeasibleScenario):
            project(np.zeros(2), np.ones(2), 3.0, np.ones(2))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_optimality(self, n, seed):
        rng = np.random.default_rng(seed)
        lam = gen.loguniform(rng, 1e-2, 1e2, n)
        ub = np.where(rng.random(n) < 0.5, gen.loguniform(rng, 1e-2, 1e2, n), np.inf)
        if np.all(np.isfinite(ub)):
            Q = float(lam @ ub) * rng.uniform(0.05, 0.95)
        else:
            Q = float(gen.loguniform(rng, 1e-2, 1e2))
        y = rng.normal(0, 10, n)
        x = project(y, lam, Q, ub)
        assert np.all(x >= 0) and np.all(x <= ub)
        assert abs(lam @ x - Q) <= 1e-12 * Q
        # no feasible random point is closer to y
        for _ in range(20):
            z = project(rng.normal(0, 10, n), lam, Q, ub)
            assert np.linalg.norm(x - y) <= np.linalg.norm(z - y) * (1 + 1e-9) + 1e-12


    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_metric_optimality(self, n, seed):
        rng = np.random.default_rng(seed)
        lam = gen.loguniform(rng, 1e-2, 1e2, n)
        d = gen.loguniform(rng, 1e-3, 1e3, n)
        ub = np.full(n, np.inf)
        Q = float(gen.loguniform(rng, 1e-2, 1e2))
        y = rng.normal(0, 10, n)
        x = project(y, lam, Q, ub, lam / d)
        assert abs(lam @ x - Q) <= 1e-12 * Q
        dist = lambda z: float(d @ (z - y) ** 2)
        for _ in range(20):
            z = project(rng.normal(0, 10, n), lam, Q, ub)
            assert dist(x) <= dist(z) * (1 + 1e-9) + 1e-12


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(max_iters=0), dict(step_tol=-1), dict(barrier_shrink=0.1),
                                    dict(seed=-1), dict(multi_starts=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestSolve:
    def test_linear_free_dispatch(self):
        s = sym([1, 1], [1, 2], [0, 0], [1, 1], [U, U], 3)
        a = solve(s)
        b = solve_analytic(s)
        np.testing.assert_array_equal(a.x, b.x)
        assert a.regime is Regime.LINEAR_FREE

    def test_r2_symmetric(self):
        s = sym([1, 1], [1, 1], [0, 0], [1, 1], [10, 10], 2, r=2)
        sol = solve(s)
        assert sol.status is Status.NUMERIC_BEST_EFFORT
        np.testing.assert_allclose(sol.x, [1, 1], rtol=1e-6)

    def test_r1_mixed_against_grid(self):
        s = sym([1, 1], [1, 1], [1, 1], [1, 1], [3, 3], 2)
        assert diagnose(s).regime is Regime.GENERAL
        sol = solve(s)
        ref = grid_search(s)
        assert sol.objective <= ref.objective * (1 + 1e-9)
        assert sol.objective == pytest.approx(7.0, rel=1e-9)

    def test_infeasible(self):
        with pytest.raises(InfeasibleScenario):
            solve(sym([1, 1], [0, 0], [0, 0], [1, 1], [1, 1], 5))

    def test_analytic_rejects_general(self):
        with pytest.raises(ValueError):
            solve(sym([1, 1], [1, 1], [1, 1], [1, 1], [3, 3], 2), method="analytic")

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            solve(sym([1], [1], [0], [1], [U], 1), method="magic")

    def test_nonconvergence(self):
        s = sym([1, 1, 1], [1, 2, 3], [1, 2, 1], [1, 2, 3], [10, 20, 30], 5, r=2)
        with pytest.raises(NonConvergence) as err:
            solve(s, SolverConfig(max_iters=1))
        sol = err.value.solution
        assert is_feasible(sol.x, s)
        assert sol.info["converged"] == 0

    def test_general_matches_analytic_transport(self):
        s = sym([1, 1], [1, 1], [1, 1], [1, 1], [U, U], 2)
        sol = solve(s, method="general")
        assert sol.objective == pytest.approx(4 + math.sqrt(2), rel=1e-12)


def test_descent_trace_nonincreasing():
    rng = np.random.default_rng(3)
    cfg = SolverConfig()
    for _ in range(20):
        s = gen.general(rng, 3, r=float(rng.choice([0.5, 2.0])))
        ub = np.where(s.bounded, (1 - cfg.barrier_shrink) * s.capacity, np.inf)
        trace = []
        projected_gradient(s, feasible_point(s), ub, cfg, trace)
        assert all(b <= a for a, b in zip(trace, trace[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.sampled_from([0.5, 1.0, 2.0]))
def test_general_properties(seed, n, r):
    rng = np.random.default_rng(seed)
    s = gen.general(rng, n, r)
    cfg = SolverConfig(multi_starts=4)
    sol = solve_general(s, cfg)
    assert is_feasible(sol.x, s)
    assert sol.objective <= objective(feasible_point(s), s)
    assert sol.regime is diagnose(s).regime
    again = solve_general(s, cfg)
    assert again.x.tobytes() == sol.x.tobytes()


def test_thread_pool_is_deterministic(monkeypatch):
    rng = np.random.default_rng(5)
    s = gen.general(rng, 4, 2.0)
    cfg = SolverConfig(multi_starts=3)
    serial = solve_general(s, cfg)
    monkeypatch.setenv("FEEDMIX_THREADS", "4")
    pooled = solve_general(s, cfg)
    assert pooled.x.tobytes() == serial.x.tobytes()
