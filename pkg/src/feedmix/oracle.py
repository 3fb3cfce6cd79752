"""Brute-force grid search over the feasible slice, for N <= 4.

x_1..x_{N-1} run over a regular grid and x_N is eliminated through the
production constraint, so every evaluated point meets it exactly. The
objective is re-implemented here in vectorized form so the oracle does not
share code with the solvers it checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyGrid, InfeasibleScenario
from .model import Regime, Scenario, Solution, Status, existence_condition, objective

DEFAULT_POINTS = {1: 1, 2: 2001, 3: 121, 4: 41}
EDGE_SHRINK = 1e-9
REFINE_FACTOR = 10.0


@dataclass(frozen=True)
class GridSpec:
    points_per_axis: Optional[int] = None
    refine_rounds: int = 3

    def __post_init__(self):
        if self.points_per_axis is not None and self.points_per_axis < 3:
            raise ValueError("points_per_axis must be at least 3")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be nonnegative")

    def points_for(self, n: int) -> int:
        return self.points_per_axis or DEFAULT_POINTS[n]


def batch_objective(X: np.ndarray, s: Scenario) -> np.ndarray:
    """F for every row of X; rows exhausting a finite reservoir get +inf."""
    X = np.atleast_2d(X)
    cost = X @ s.c + np.sum(s.C * np.power(X, s.gamma), axis=1)
    used = X * s.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(s.bounded, s.W / (s.W - used), 1.0)
    weight = np.where(s.bounded & (used >= s.W), np.inf, weight)
    water = np.sum(weight * used, axis=1)
    if s.r == 1:
        return cost + water
    m = np.maximum(cost, water)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = m * ((cost / m) ** s.r + (water / m) ** s.r) ** (1.0 / s.r)
    return np.where(m > 0, f, 0.0)


def _complete(G, s):
    """Append x_N from the constraint and drop rows that leave the box."""
    lam = s.lam
    ub = np.where(s.bounded, s.capacity * (1.0 - EDGE_SHRINK), np.inf)
    last = (s.Q - G @ lam[:-1]) / lam[-1]
    # rounding at the vertex x_N = 0
    last = np.where((last < 0) & (last > -1e-12 * s.Q / lam[-1]), 0.0, last)
    X = np.column_stack([G, last])
    keep = np.all(X >= 0, axis=1) & np.all(X <= ub, axis=1)
    return X[keep]


def _grid(lo, hi, k):
    axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def grid_search(s: Scenario, g: GridSpec | None = None, check_existence: bool = True) -> Solution:
    """Exhaustive minimization of F on a refined grid of the feasible slice.

    With ``check_existence=False`` the existence condition is not consulted
    and an infeasible scenario surfaces as ``EmptyGrid``.
    """
    g = g or GridSpec()
    n = s.n
    if not 1 <= n <= 4:
        raise ValueError(f"grid oracle supports 1 <= N <= 4, got N={n}")
    if check_existence and not existence_condition(s):
        raise InfeasibleScenario("existence condition fails")
    if n == 1:
        X = _complete(np.zeros((1, 0)), s)
        if len(X) == 0:
            raise EmptyGrid("single feedstock exceeds its reservoir")
        x = X[0]
        return Solution(x, objective(x, s), Status.NUMERIC_BEST_EFFORT, Regime.GENERAL,
                        info={"evaluated": 1})

    k = g.points_for(n)
    ub = np.where(s.bounded, s.capacity * (1.0 - EDGE_SHRINK), np.inf)
    top = np.minimum(s.Q / s.lam, ub)[:-1]
    # smallest x_i the other records can still complement up to Q
    rest = float(s.lam @ np.minimum(s.Q / s.lam, ub)) - s.lam * np.minimum(s.Q / s.lam, ub)
    floor = np.maximum((s.Q - rest) / s.lam, 0.0)[:-1]
    floor = np.minimum(floor, top)
    lo = floor.copy()
    hi = top.copy()
    best_x, best_f = None, np.inf
    history = []
    evaluated = 0
    for rnd in range(g.refine_rounds + 1):
        X = _complete(_grid(lo, hi, k), s)
        evaluated += len(X)
        if len(X):
            F = batch_objective(X, s)
            i = int(np.argmin(F))
            if F[i] < best_f:
                best_f, best_x = float(F[i]), X[i].copy()
        if best_x is None:
            raise EmptyGrid("every grid point violates the box constraints")
        history.append(best_f)
        half = (hi - lo) / (2.0 * REFINE_FACTOR)
        lo = np.maximum(best_x[:-1] - half, floor)
        hi = np.minimum(best_x[:-1] + half, top)
    return Solution(best_x, best_f, Status.NUMERIC_BEST_EFFORT, Regime.GENERAL,
                    info={"evaluated": evaluated, "history": history})


def certify(sol: Solution, s: Scenario, g: GridSpec | None = None, rel_tol: float = 1e-6) -> bool:
    """True when ``sol`` is at least as good as brute force, up to ``rel_tol``."""
    ref = grid_search(s, g)
    return objective(sol.x, s) <= ref.objective * (1.0 + rel_tol)
