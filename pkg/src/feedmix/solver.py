"""General numerical solver for the full program (any r > 0).

Supports (sets of feedstocks allowed to be nonzero) are enumerated and each
restricted problem is minimized by projected gradient descent over
``{x : lambda @ x == Q, 0 <= x <= ub}``. Transport terms make F concave in
the coordinates with C_i > 0, so minima tend to sit on faces; enumerating
faces turns that into a family of smooth subproblems.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analytic
from .errors import InfeasibleScenario, NonConvergence, SaturatedReservoir
from .model import (
    ACTIVE_TOL,
    Regime,
    Scenario,
    Solution,
    Status,
    existence_condition,
    feasible_point,
    is_feasible,
    objective,
    potentials,
    reservoir_sum,
    water_weights,
)

ARMIJO = 1e-4
SHRINK = 0.5
MAX_HALVINGS = 60


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    step_tol: float = 1e-12
    multi_starts: int = 20
    seed: int = 0
    barrier_shrink: float = 1e-9
    support_enum_limit: int = 12
    grad_eps: float = 1e-12

    def __post_init__(self):
        for name in ("max_iters", "step_tol", "multi_starts", "barrier_shrink",
                     "support_enum_limit", "grad_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverConfig.{name} must be positive")
        if self.barrier_shrink >= 1e-3:
            raise ValueError("barrier_shrink must be below 1e-3")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class KKTResidual:
    stationarity: np.ndarray  # gradient_i - xi * lambda_i on the active coordinates
    active: np.ndarray
    xi: float
    primal: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.stationarity))) if self.stationarity.size else 0.0


def _ces_partials(x, s: Scenario):
    """(dF/da, dF/db) at the clamped mix; both are 1 when r == 1."""
    if s.r == 1:
        return 1.0, 1.0
    w = water_weights(x, s)
    a = float(np.sum(s.c * x + s.C * x**s.gamma))
    b = float(np.sum(w * s.mu * x))
    m = max(a, b)
    f = m * ((a / m) ** s.r + (b / m) ** s.r) ** (1.0 / s.r)
    # dF/da = (a/F)^(r-1); a == 0 only when every c_i = C_i = 0
    ga = (a / f) ** (s.r - 1.0) if a > 0 else 0.0
    gb = (b / f) ** (s.r - 1.0)
    return ga, gb


def gradient(x, s: Scenario, grad_eps: float = 1e-12) -> np.ndarray:
    """Analytic gradient of F; coordinates are clamped to ``>= grad_eps`` first."""
    x = np.maximum(np.asarray(x, dtype=float), grad_eps)
    if x.shape != (s.n,):
        raise ValueError(f"mix has shape {x.shape}, expected ({s.n},)")
    w = water_weights(x, s)
    d_cost = s.c + s.gamma * s.C * x ** (s.gamma - 1.0)
    d_water = s.mu * w**2
    ga, gb = _ces_partials(x, s)
    return ga * d_cost + gb * d_water


def _curvature(x, s: Scenario, grad_eps: float) -> np.ndarray:
    """|diagonal second derivatives| of the two terms, weighted by the CES partials.

    Cross terms of the aggregator are ignored; the result only serves as a metric.
    """
    xc = np.maximum(x, grad_eps)
    ga, gb = _ces_partials(xc, s)
    g = s.gamma
    cost = np.where(x > 0, g * (1.0 - g) * s.C * xc ** (g - 2.0), 0.0)
    water = np.zeros(s.n)
    b = s.bounded
    water[b] = 2.0 * s.W[b] ** 2 * s.mu[b] ** 2 / (s.W[b] - s.mu[b] * xc[b]) ** 3
    return ga * cost + gb * water


def kkt_residual(x, s: Scenario, active_tol: float = ACTIVE_TOL) -> KKTResidual:
    """Stationarity residuals gradient_i - xi*lambda_i on coordinates with x_i > active_tol.

    ``xi`` is the least-squares fit of gradient_i ~ xi * lambda_i over those
    coordinates.
    """
    x = np.asarray(x, dtype=float)
    primal = abs(float(s.lam @ x) - s.Q)
    active = np.flatnonzero(x > active_tol)
    if active.size == 0:
        return KKTResidual(np.zeros(0), active, float("nan"), primal)
    g = gradient(x, s)[active]
    lam = s.lam[active]
    xi = float(g @ lam / (lam @ lam))
    return KKTResidual(g - xi * lam, active, xi, primal)


def project(y, lam, Q, ub, v=None) -> np.ndarray:
    """Projection of ``y`` onto ``{x : lam @ x == Q, 0 <= x <= ub}``.

    ``x(tau) = clip(y - tau*v, 0, ub)`` and ``lam @ x(tau)`` is piecewise
    linear and nonincreasing in tau, so the root is found exactly between
    consecutive breakpoints. ``v = lam`` (the default) gives the Euclidean
    projection; ``v = lam / d`` projects in the metric ``sum d_i z_i^2``.
    """
    v = lam if v is None else v
    finite = np.isfinite(ub)
    bps = np.concatenate([y / v, (y[finite] - ub[finite]) / v[finite]])
    bps = np.unique(bps)
    xs = np.clip(y[None, :] - bps[:, None] * v[None, :], 0.0, ub[None, :])
    h = xs @ lam
    above = np.flatnonzero(h >= Q)
    if above.size == 0:
        # left of every breakpoint only unbounded coordinates still move
        slope = float(lam[~finite] @ v[~finite])
        if slope == 0:
            raise InfeasibleScenario("box cannot reach the production target")
        tau = bps[0] - (Q - h[0]) / slope
    else:
        k = above[-1]
        if k == len(bps) - 1:
            tau = bps[k]
        else:
            tau = bps[k] + (h[k] - Q) * (bps[k + 1] - bps[k]) / (h[k] - h[k + 1])
    x = np.clip(y - tau * v, 0.0, ub)
    # tau loses digits when |y| is large; push the residual onto the free coordinates
    for _ in range(4):
        r = Q - float(lam @ x)
        if abs(r) <= 1e-15 * Q:
            break
        move = (x > 0) & (x < ub)
        if not move.any():
            move = x < ub if r > 0 else x > 0
        x[move] += r * v[move] / float(lam[move] @ v[move])
        x = np.clip(x, 0.0, ub)
    return x


def _safe_objective(x, s):
    try:
        return objective(x, s)
    except SaturatedReservoir:
        return np.inf


def _armijo(s, ub, x, f, g, dm, v, tol):
    """Backtracking along the projected arc; returns (x_new, f_new, step) or None when stalled."""
    a = 1.0
    for _ in range(MAX_HALVINGS):
        xn = project(x - a * g / dm, s.lam, s.Q, ub, v)
        d = xn - x
        if np.linalg.norm(d) <= tol:
            return None
        fn = _safe_objective(xn, s)
        if fn <= f + ARMIJO * float(g @ d):
            return xn, fn, a
        a *= SHRINK
    # no decrease resolvable in floating point
    return None


def projected_gradient(s: Scenario, x0, ub, cfg: SolverConfig, trace=None):
    """Diagonally scaled projected gradient descent with Armijo backtracking.

    The metric is ``d_i = max(curvature_i, 1/alpha)`` where alpha is the
    Barzilai-Borwein step: a projected diagonal-Newton step where the terms
    are curved, a spectral gradient step where they are flat. When the scaled
    step stalls (typically right at a reservoir bound, where the curvature
    explodes) the plain spectral step is tried before declaring convergence.
    Returns ``(x, f, iterations, converged)``. When ``trace`` is a list the
    objective after every accepted step is appended to it.
    """
    lam, Q = s.lam, s.Q
    x = project(np.asarray(x0, dtype=float), lam, Q, ub)
    f = _safe_objective(x, s)
    if trace is not None:
        trace.append(f)
    g = gradient(x, s, cfg.grad_eps)
    alpha = 1.0 / max(np.linalg.norm(g), 1e-300) * max(1.0, np.linalg.norm(x))
    for it in range(1, cfg.max_iters + 1):
        tol = cfg.step_tol * max(1.0, float(np.linalg.norm(x)))
        dm = np.maximum(_curvature(x, s, cfg.grad_eps), 1.0 / alpha)
        step = _armijo(s, ub, x, f, g, dm, lam / dm, tol)
        if step is None:
            flat = np.full(s.n, 1.0 / alpha)
            step = _armijo(s, ub, x, f, g, flat, lam, tol)
            if step is None:
                return x, f, it, True
        xn, fn, a = step
        d = xn - x
        gn = gradient(xn, s, cfg.grad_eps)
        sy = float(d @ (gn - g))
        alpha = float(d @ d) / sy if sy > 0 else 2.0 * a * alpha
        alpha = min(max(alpha, 1e-20), 1e20)
        x, f, g = xn, fn, gn
        if trace is not None:
            trace.append(f)
    return x, f, cfg.max_iters, False


def _supports(s: Scenario, cfg: SolverConfig):
    n = s.n
    if n <= cfg.support_enum_limit:
        for k in range(2, n + 1):
            yield from itertools.combinations(range(n), k)
    else:
        order = [int(i) for i in np.argsort(potentials(s), kind="stable")]
        for k in range(2, n + 1):
            yield tuple(sorted(order[:k]))


def _starts(sub: Scenario, ub, count, rng):
    """Proportional point followed by random Dirichlet splits of the commodity demand."""
    starts = []
    if np.all(sub.bounded):
        starts.append(sub.Q * sub.capacity / float(sub.lam @ sub.capacity))
    else:
        x = np.zeros(sub.n)
        free = ~sub.bounded
        x[free] = sub.Q / np.sum(sub.lam[free])
        starts.append(x)
    while len(starts) < count:
        w = rng.dirichlet(np.ones(sub.n))
        starts.append(w * sub.Q / sub.lam)
    return [project(np.minimum(x, ub), sub.lam, sub.Q, ub) for x in starts]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FEEDMIX_THREADS", "1")))
    except ValueError:
        return 1


def _run_support(args):
    s, support, starts, ub, cfg = args
    sub = s.replace_feedstocks([s.feedstocks[i] for i in support])
    results = []
    for x0 in starts:
        x, f, _, ok = projected_gradient(sub, x0, ub, cfg)
        full = np.zeros(s.n)
        full[list(support)] = x
        results.append((f, full, ok))
    return results


def _key(cand):
    f, x = cand[0], cand[1]
    return (f, tuple(x))


def solve_general(s: Scenario, cfg: SolverConfig | None = None) -> Solution:
    """Best mix over vertices, supports and multi-starts; NumericBestEffort status."""
    cfg = cfg or SolverConfig()
    if not existence_condition(s):
        raise InfeasibleScenario(
            f"sum lambda*W/mu = {reservoir_sum(s)} does not exceed Q = {s.Q}"
        )
    regime = analytic.diagnose(s).regime
    ub_all = np.where(s.bounded, (1.0 - cfg.barrier_shrink) * s.capacity, np.inf)

    cands = []
    x0 = feasible_point(s)
    cands.append((objective(x0, s), x0))
    for j in range(s.n):
        x = np.zeros(s.n)
        x[j] = s.Q / s.lam[j]
        if x[j] <= ub_all[j]:
            cands.append((objective(x, s), x))

    rng = np.random.default_rng(cfg.seed)
    jobs = []
    for support in _supports(s, cfg):
        idx = list(support)
        ub = ub_all[idx]
        if float(s.lam[idx] @ ub) <= s.Q:
            continue
        sub = s.replace_feedstocks([s.feedstocks[i] for i in idx])
        jobs.append((s, support, _starts(sub, ub, cfg.multi_starts, rng), ub, cfg))

    threads = _threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(_run_support, jobs))
    else:
        outcomes = [_run_support(job) for job in jobs]

    runs = converged = 0
    for results in outcomes:
        for f, x, ok in results:
            runs += 1
            converged += ok
            cands.append((f, x))

    cands = [c for c in cands if np.isfinite(c[0]) and is_feasible(c[1], s)]
    f, x = min(cands, key=_key)
    sol = Solution(x, float(f), Status.NUMERIC_BEST_EFFORT, regime,
                   xi=kkt_residual(x, s).xi, info={"runs": runs, "converged": converged})
    if runs and not converged:
        raise NonConvergence(f"iteration cap {cfg.max_iters} hit on all {runs} starts", sol)
    return sol


def solve(s: Scenario, cfg: SolverConfig | None = None, method: str = "auto") -> Solution:
    """Solve the program.

    ``auto`` dispatches closed-form regimes to the exact solvers and everything
    else to ``solve_general``; ``analytic`` and ``general`` force one path.
    """
    cfg = cfg or SolverConfig()
    if method not in ("auto", "analytic", "general"):
        raise ValueError(f"unknown method {method!r}")
    if not existence_condition(s):
        raise InfeasibleScenario(
            f"sum lambda*W/mu = {reservoir_sum(s)} does not exceed Q = {s.Q}"
        )
    if method == "general":
        return solve_general(s, cfg)
    regime = analytic.diagnose(s).regime
    if regime is Regime.GENERAL:
        if method == "analytic":
            raise ValueError("no closed-form solver for the General regime")
        return solve_general(s, cfg)
    return analytic.solve_analytic(s)
