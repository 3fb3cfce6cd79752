"""Exact solvers for the three closed-form regimes of the linear (r = 1) program.

Every regime reduces to a one-dimensional search for the Lagrange multiplier
``xi`` of the production constraint: each stationarity equation is solved for
``x_i(xi)`` and the multiplier is fixed by ``sum(lambda_i x_i(xi)) == Q``.
The sums are monotone in ``xi`` so plain bisection is globally convergent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleScenario, RootBracketFailure
from .model import (
    Regime,
    Scenario,
    Solution,
    Status,
    existence_condition,
    feasible_point,
    objective,
    potentials,
    reservoir_sum,
    xi_bar,
)

POT_TOL = 1e-9
ROOT_RTOL = 1e-10
BRACKET_RTOL = 1e-12
MAX_DOUBLINGS = 200


@dataclass
class RegimeDiagnosis:
    regime: Regime
    reasons: list[str] = field(default_factory=list)


@dataclass
class CompensationReport:
    m: dict[int, float]
    holds: bool
    p_at_xi_bar: float
    xi_bar: float
    i_bar: int


def diagnose(s: Scenario) -> RegimeDiagnosis:
    linear = s.r == 1
    free_transport = bool(np.all(s.C == 0))
    no_scarcity = not bool(np.any(s.bounded))
    reasons = [
        "r = 1 (linear CES)" if linear else f"r = {s.r} (nonlinear CES)",
        "all C_i = 0 (free transport)" if free_transport else "some C_i > 0 (transport cost)",
        "all W_i unbounded (no scarcity)" if no_scarcity else "some W_i finite (water scarcity)",
    ]
    if linear and free_transport and no_scarcity:
        regime = Regime.LINEAR_FREE
    elif linear and no_scarcity:
        regime = Regime.TRANSPORT_NO_SCARCITY
    elif linear and free_transport:
        regime = Regime.SCARCITY_FREE_TRANSPORT
    else:
        regime = Regime.GENERAL
    return RegimeDiagnosis(regime, reasons)


def _require(s: Scenario, regime: Regime):
    got = diagnose(s).regime
    if got is not regime:
        raise ValueError(f"scenario is in regime {got.value}, expected {regime.value}")


def _single(s: Scenario, regime: Regime) -> Solution:
    if not existence_condition(s):
        raise InfeasibleScenario("single feedstock cannot meet Q within its reservoir")
    x = np.array([s.Q / s.lam[0]])
    f = s.feedstocks[0]
    slope = f.c + f.C * s.gamma * x[0] ** (s.gamma - 1.0) + f.mu * _water_slope(f, x[0])
    return Solution(x, objective(x, s), Status.INTERIOR_OPTIMUM, regime, xi=slope / f.lam)


def _water_slope(f, x):
    if f.W is None:
        return 1.0
    return f.W**2 / (f.W - f.mu * x) ** 2


def bisect_root(func, lo, hi, target, increasing, xtol=None, ftol=None, max_iter=400):
    """Bisection for ``func(t) == target`` with ``func`` monotone on [lo, hi].

    Stops once ``|func(t) - target| <= ftol`` and ``hi - lo <= xtol``, or when
    the bracket can no longer be split in floating point. Intervals spanning
    several orders of magnitude are split geometrically first.
    """
    ftol = ROOT_RTOL * abs(target) if ftol is None else ftol
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        if lo > 0 and hi > 4 * lo:
            t = math.sqrt(lo * hi)
        else:
            t = 0.5 * (lo + hi)
        if t <= lo or t >= hi:
            break
        v = func(t)
        width_ok = xtol is None or hi - lo <= xtol(t)
        if abs(v - target) <= ftol and width_ok:
            return t
        if (v < target) == increasing:
            lo = t
        else:
            hi = t
    # float exhaustion: return the better endpoint
    cands = [c for c in (lo, t, hi)]
    return min(cands, key=lambda c: abs(func(c) - target))


# -- no scarcity, free transport -------------------------------------------


def interchangeable_linear(s: Scenario, tol: float = POT_TOL) -> bool:
    p = potentials(s)
    return bool(p.max() - p.min() <= tol * p.max())


def solve_linear_free(s: Scenario, pot_tol: float = POT_TOL) -> Solution:
    """Linear objective sum((c_i + mu_i) x_i): the cheapest potential takes all demand.

    With every potential equal the objective is constant on the feasible set
    and the proportional spread from ``feasible_point`` is returned instead.
    """
    _require(s, Regime.LINEAR_FREE)
    if s.n == 1:
        return _single(s, Regime.LINEAR_FREE)
    p = potentials(s)
    p_min = float(p.min())
    best = np.flatnonzero(p <= p_min + pot_tol * abs(p_min))
    x = np.zeros(s.n)
    if len(best) == s.n:
        x = feasible_point(s)
        status = Status.INTERIOR_OPTIMUM
    else:
        j = int(best[0])
        x[j] = s.Q / s.lam[j]
        status = Status.BOUNDARY_OPTIMUM
    return Solution(x, objective(x, s), status, Regime.LINEAR_FREE, xi=p_min,
                    info={"optimal_set": [int(i) for i in best]})


# -- transport cost, no scarcity --------------------------------------------


def _transport_alloc_offset(s: Scenario, t: float, xb: float) -> np.ndarray:
    # x_i at xi = xb + t, with xi*lam_i - c_i - mu_i written as lam_i * (t + xb - P_i)
    gap = s.lam * (t + (xb - potentials(s)))
    return (gap / (s.gamma * s.C)) ** (1.0 / (s.gamma - 1.0))


def transport_allocation(s: Scenario, xi: float) -> np.ndarray:
    """Stationary allocation x_i(xi) of the transport regime, valid for xi > max potential."""
    gap = xi * s.lam - s.c - s.mu
    if np.any(gap <= 0):
        raise ValueError("xi must exceed every productive potential")
    return (gap / (s.gamma * s.C)) ** (1.0 / (s.gamma - 1.0))


def transport_multiplier_sum(s: Scenario, xi: float) -> float:
    """P(xi) = sum(lambda_i x_i(xi)); strictly decreasing on (max potential, inf)."""
    return float(s.lam @ transport_allocation(s, xi))


def transport_critical_point(s: Scenario) -> tuple[np.ndarray, float]:
    """Unique stationary point of F on the production constraint (transport regime).

    The Hessian there is negative definite, so this point is a constrained
    local maximum. It is exposed for verification, never as an optimum.
    """
    _require(s, Regime.TRANSPORT_NO_SCARCITY)
    if np.any(s.C <= 0):
        raise ValueError("critical point requires every C_i > 0")
    xb, _ = xi_bar(s)
    Q = s.Q

    def total(t):
        return float(s.lam @ _transport_alloc_offset(s, t, xb))

    lo = xb * 1e-12
    while total(lo) <= Q:
        lo *= 1e-6
        if lo < 1e-300:
            raise RootBracketFailure("P(xi) does not exceed Q next to max potential")
    hi = max(1.0, 2.0 * lo)
    for _ in range(MAX_DOUBLINGS):
        if total(hi) < Q:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise RootBracketFailure("P(xi) did not drop below Q after doubling")

    t = bisect_root(total, lo, hi, Q, increasing=False,
                    xtol=lambda t: BRACKET_RTOL * max(1.0, xb + t))
    x = _transport_alloc_offset(s, t, xb)
    return x, xb + t


def solve_transport_no_scarcity(s: Scenario) -> Solution:
    """Best vertex x_j = Q / lambda_j.

    F is concave on the feasible simplex here (linear plus concave transport
    terms), so every face attains its minimum at a vertex and enumerating
    the single-feedstock supports is exact for any N.
    """
    _require(s, Regime.TRANSPORT_NO_SCARCITY)
    if s.n == 1:
        return _single(s, Regime.TRANSPORT_NO_SCARCITY)
    best = None
    for j in range(s.n):
        x = np.zeros(s.n)
        x[j] = s.Q / s.lam[j]
        f = objective(x, s)
        if best is None or f < best[0]:
            best = (f, j, x)
    f, j, x = best
    rec = s.feedstocks[j]
    xi = (rec.c + rec.mu + s.gamma * rec.C * x[j] ** (s.gamma - 1.0)) / rec.lam
    return Solution(x, f, Status.BOUNDARY_OPTIMUM, Regime.TRANSPORT_NO_SCARCITY, xi=xi)


# -- water scarcity, free transport ------------------------------------------


def scarcity_allocation(s: Scenario, xi: float) -> np.ndarray:
    """x_i(xi) = (W_i/mu_i)(1 - sqrt(mu_i / (xi lambda_i - c_i))) for finite W_i.

    Coordinates whose potential exceeds ``xi`` are clamped to 0. Unbounded
    records get 0 (their stationarity equation does not depend on x_i).
    """
    b = s.bounded
    u = np.maximum(s.lam * (xi - potentials(s)) / s.mu, 0.0)
    root = np.sqrt(1.0 + u)
    # 1 - 1/sqrt(1+u) without cancellation
    frac = u / (root * (1.0 + root))
    x = np.zeros(s.n)
    x[b] = s.capacity[b] * frac[b]
    return x


def scarcity_multiplier_sum(s: Scenario, xi: float) -> float:
    """P(xi) for the scarcity regime; increasing, bounded by sum(lambda W / mu)."""
    return float(s.lam @ scarcity_allocation(s, xi))


def compensation_condition(s: Scenario) -> CompensationReport:
    """Sufficient condition for a unique all-positive optimum, plus the exact test value P(xi_bar)."""
    _require(s, Regime.SCARCITY_FREE_TRANSPORT)
    if not np.all(s.bounded):
        raise ValueError("compensation condition needs every W_i finite")
    if s.n < 2:
        raise ValueError("compensation condition needs N >= 2")
    xb, ib = xi_bar(s)
    n = s.n
    m = {}
    holds = True
    lhs_unit = s.c[ib] / s.lam[ib] + s.mu[ib] / s.lam[ib]
    for i in range(n):
        if i == ib:
            continue
        mi = max(0.0, 1.0 - s.Q * s.mu[i] / (s.W[i] * s.lam[i] * (n - 1)))
        m[i] = mi
        lhs = mi**2 * lhs_unit
        rhs = mi**2 * s.c[i] / s.lam[i] + s.mu[i] / s.lam[i]
        holds = holds and bool(lhs < rhs)
    return CompensationReport(m, holds, scarcity_multiplier_sum(s, xb), xb, ib)


def solve_scarcity_free_transport(s: Scenario) -> Solution:
    """Convex regime: locate xi with P(xi) = Q by bisection.

    When P(xi_bar) < Q the root lies above xi_bar and the optimum is unique
    with every x_i > 0. Otherwise (or with unbounded records present) the
    clamped allocation is used and the optimum sits on the boundary.
    """
    _require(s, Regime.SCARCITY_FREE_TRANSPORT)
    if not existence_condition(s):
        raise InfeasibleScenario(
            f"sum lambda*W/mu = {reservoir_sum(s)} does not exceed Q = {s.Q}"
        )
    if s.n == 1:
        return _single(s, Regime.SCARCITY_FREE_TRANSPORT)

    Q = s.Q
    p = potentials(s)
    xb, _ = xi_bar(s)

    def total(xi):
        return scarcity_multiplier_sum(s, xi)

    xtol = lambda xi: BRACKET_RTOL * max(1.0, xi)  # noqa: E731
    free = ~s.bounded
    if np.any(free):
        # unbounded records absorb any amount at their own potential
        j = int(np.flatnonzero(free)[np.argmin(p[free])])
        cap = float(p[j])
        if total(cap) < Q:
            x = scarcity_allocation(s, cap)
            x[j] = (Q - float(s.lam @ x)) / s.lam[j]
            xi = cap
        else:
            xi = bisect_root(total, float(p.min()), cap, Q, increasing=True, xtol=xtol)
            x = scarcity_allocation(s, xi)
    elif total(xb) < Q:
        lo, hi = xb, xb + 1.0
        for _ in range(MAX_DOUBLINGS):
            if total(hi) > Q:
                break
            lo, hi = hi, xb + 2.0 * (hi - xb)
        else:
            raise RootBracketFailure("P(xi) did not reach Q after doubling")
        xi = bisect_root(total, lo, hi, Q, increasing=True, xtol=xtol)
        x = scarcity_allocation(s, xi)
    else:
        xi = bisect_root(total, float(p.min()), xb, Q, increasing=True, xtol=xtol)
        x = scarcity_allocation(s, xi)

    status = Status.INTERIOR_OPTIMUM if np.all(x > 0) else Status.BOUNDARY_OPTIMUM
    return Solution(x, objective(x, s), status, Regime.SCARCITY_FREE_TRANSPORT, xi=xi)


def solve_analytic(s: Scenario) -> Solution:
    regime = diagnose(s).regime
    if regime is Regime.LINEAR_FREE:
        return solve_linear_free(s)
    if regime is Regime.TRANSPORT_NO_SCARCITY:
        return solve_transport_no_scarcity(s)
    if regime is Regime.SCARCITY_FREE_TRANSPORT:
        return solve_scarcity_free_transport(s)
    raise ValueError("no closed-form solver for the General regime")
