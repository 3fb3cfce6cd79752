"""Scenario types, objective evaluation and feasibility helpers.

A scenario describes N country-feedstock options that can be converted into a
commodity. Allocations are plain numpy vectors ``x`` of length N; ``x[i]`` is
the imported amount of feedstock ``i``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleScenario, SaturatedReservoir, ScenarioError

FEAS_TOL = 1e-9
ACTIVE_TOL = 1e-10


class Status(str, enum.Enum):
    INTERIOR_OPTIMUM = "InteriorOptimum"
    BOUNDARY_OPTIMUM = "BoundaryOptimum"
    CRITICAL_POINT_IS_MAXIMUM = "CriticalPointIsMaximum"
    INFEASIBLE = "Infeasible"
    NUMERIC_BEST_EFFORT = "NumericBestEffort"


class Regime(str, enum.Enum):
    LINEAR_FREE = "LinearFree"
    TRANSPORT_NO_SCARCITY = "TransportNoScarcity"
    SCARCITY_FREE_TRANSPORT = "ScarcityFreeTransport"
    GENERAL = "General"


def _finite_number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise ScenarioError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class FeedstockRecord:
    """One country-feedstock option.

    ``W=None`` means an unbounded water reservoir (no scarcity weighting).
    """

    name: str
    lam: float
    c: float
    C: float
    mu: float
    W: Optional[float] = None

    def __post_init__(self):
        for attr in ("lam", "c", "C", "mu"):
            object.__setattr__(self, attr, _finite_number(getattr(self, attr), f"{self.name}.{attr}"))
        if self.W is not None:
            object.__setattr__(self, "W", _finite_number(self.W, f"{self.name}.W"))
            if self.W <= 0:
                raise ScenarioError(f"{self.name}: W must be positive or unbounded, got {self.W}")
        if self.lam <= 0:
            raise ScenarioError(f"{self.name}: lambda must be positive, got {self.lam}")
        if self.mu <= 0:
            raise ScenarioError(f"{self.name}: mu must be positive, got {self.mu}")
        if self.c < 0 or self.C < 0:
            raise ScenarioError(f"{self.name}: c and C must be nonnegative")

    @property
    def unbounded(self) -> bool:
        return self.W is None


@dataclass(frozen=True)
class Scenario:
    feedstocks: tuple[FeedstockRecord, ...]
    Q: float
    gamma: float
    r: float

    def __post_init__(self):
        object.__setattr__(self, "feedstocks", tuple(self.feedstocks))
        if not self.feedstocks:
            raise ScenarioError("scenario needs at least one feedstock")
        for attr in ("Q", "gamma", "r"):
            object.__setattr__(self, attr, _finite_number(getattr(self, attr), attr))
        if self.Q <= 0:
            raise ScenarioError(f"Q must be positive, got {self.Q}")
        if not 0 < self.gamma < 1:
            raise ScenarioError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.r <= 0:
            raise ScenarioError(f"r must be positive, got {self.r}")

    @classmethod
    def from_arrays(cls, lam, c, C, mu, W, Q, gamma=0.5, r=1.0, names=None):
        """Build a scenario from parallel sequences; ``None`` or ``inf`` in W means unbounded."""
        n = len(lam)
        names = names or [f"f{i}" for i in range(n)]
        recs = []
        for i in range(n):
            w = W[i]
            if w is not None and math.isinf(w):
                w = None
            recs.append(FeedstockRecord(names[i], lam[i], c[i], C[i], mu[i], w))
        return cls(tuple(recs), Q, gamma, r)

    def replace_feedstocks(self, feedstocks) -> "Scenario":
        return Scenario(tuple(feedstocks), self.Q, self.gamma, self.r)

    @property
    def n(self) -> int:
        return len(self.feedstocks)

    @cached_property
    def lam(self) -> np.ndarray:
        return np.array([f.lam for f in self.feedstocks])

    @cached_property
    def c(self) -> np.ndarray:
        return np.array([f.c for f in self.feedstocks])

    @cached_property
    def C(self) -> np.ndarray:
        return np.array([f.C for f in self.feedstocks])

    @cached_property
    def mu(self) -> np.ndarray:
        return np.array([f.mu for f in self.feedstocks])

    @cached_property
    def W(self) -> np.ndarray:
        """Reservoirs with ``inf`` standing in for unbounded records (array use only)."""
        return np.array([np.inf if f.W is None else f.W for f in self.feedstocks])

    @cached_property
    def bounded(self) -> np.ndarray:
        return np.array([f.W is not None for f in self.feedstocks])

    @cached_property
    def capacity(self) -> np.ndarray:
        """Per-record allocation limit W_i / mu_i (``inf`` when unbounded)."""
        return self.W / self.mu


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    status: Status
    regime: Regime
    xi: Optional[float] = None
    info: dict = field(default_factory=dict)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.x > ACTIVE_TOL))

    def support_mask(self) -> int:
        """Bitmask of active feedstocks, bit i set when x_i > ACTIVE_TOL."""
        return sum(1 << i for i in self.support)


def _as_mix(x, s: Scenario) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.n,):
        raise ValueError(f"mix has shape {x.shape}, expected ({s.n},)")
    if np.any(x < 0):
        raise ValueError("mix has negative entries")
    return x


def total_cost(x, s: Scenario) -> float:
    """Linear purchase cost plus sublinear transport cost, with 0**gamma == 0."""
    x = _as_mix(x, s)
    return float(np.sum(s.c * x + s.C * x**s.gamma))


def water_weights(x, s: Scenario) -> np.ndarray:
    """Scarcity weights W_i / (W_i - mu_i x_i); exactly 1 for unbounded records."""
    x = _as_mix(x, s)
    used = s.mu * x
    b = s.bounded
    if np.any(used[b] >= s.W[b]):
        i = int(np.flatnonzero(b & (used >= s.W))[0])
        raise SaturatedReservoir(
            f"feedstock {s.feedstocks[i].name}: mu*x = {used[i]} reaches W = {s.W[i]}"
        )
    w = np.ones(s.n)
    w[b] = s.W[b] / (s.W[b] - used[b])
    return w


def water_impact(x, s: Scenario) -> float:
    x = _as_mix(x, s)
    return float(np.sum(water_weights(x, s) * s.mu * x))


def ces(a: float, b: float, r: float) -> float:
    """CES aggregate (a**r + b**r)**(1/r) of two nonnegative values."""
    if r <= 0:
        raise ValueError(f"CES exponent must be positive, got {r}")
    if a < 0 or b < 0:
        raise ValueError("CES arguments must be nonnegative")
    if r == 1:
        return a + b
    m = max(a, b)
    if m == 0:
        return 0.0
    # scaled to avoid overflow for large r
    return m * ((a / m) ** r + (b / m) ** r) ** (1.0 / r)


def objective(x, s: Scenario) -> float:
    """F(x): CES aggregate of total cost and water impact.

    Evaluable off the production constraint; raises SaturatedReservoir if a
    finite reservoir is exhausted.
    """
    return ces(total_cost(x, s), water_impact(x, s), s.r)


def reservoir_sum(s: Scenario) -> float:
    """Sum of lambda_i W_i / mu_i; infinite if any record is unbounded."""
    return float(np.sum(s.lam * s.capacity))


def existence_condition(s: Scenario) -> bool:
    return reservoir_sum(s) > s.Q


def feasible_point(s: Scenario) -> np.ndarray:
    """A strictly feasible allocation.

    All-finite reservoirs: x_i = eta * W_i / mu_i with eta chosen to meet Q.
    Otherwise the demand is spread over the unbounded records only, with an
    equal amount Q / sum(lambda_unbounded) on each.
    """
    if not existence_condition(s):
        raise InfeasibleScenario(
            f"sum lambda*W/mu = {reservoir_sum(s)} does not exceed Q = {s.Q}"
        )
    x = np.zeros(s.n)
    if np.all(s.bounded):
        eta = s.Q / reservoir_sum(s)
        x = eta * s.capacity
    else:
        free = ~s.bounded
        x[free] = s.Q / np.sum(s.lam[free])
    return x


def is_feasible(x, s: Scenario, feas_tol: float = FEAS_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.n,) or np.any(x < 0) or not np.all(np.isfinite(x)):
        return False
    if abs(float(s.lam @ x) - s.Q) > feas_tol * s.Q:
        return False
    b = s.bounded
    return bool(np.all(s.mu[b] * x[b] < s.W[b]))


def potentials(s: Scenario) -> np.ndarray:
    """Productive potentials (c_i + mu_i) / lambda_i for all records."""
    return (s.c + s.mu) / s.lam


def productive_potential(s: Scenario, i: int) -> float:
    if not 0 <= i < s.n:
        raise IndexError(f"feedstock index {i} out of range for N={s.n}")
    f = s.feedstocks[i]
    return (f.c + f.mu) / f.lam


def xi_bar(s: Scenario) -> tuple[float, int]:
    """Maximum productive potential and its index (lowest index on ties)."""
    p = potentials(s)
    i = int(np.argmax(p))
    return float(p[i]), i


def hessian_diagonal(x, s: Scenario) -> np.ndarray:
    """Diagonal of the Hessian of total_cost + water_impact (the r = 1 objective).

    The r = 1 objective is separable so this is its full Hessian.
    Transport entries are gamma(gamma-1) C_i x_i^(gamma-2), scarcity entries
    2 W_i^2 mu_i^2 / (W_i - mu_i x_i)^3.
    """
    x = _as_mix(x, s)
    g = s.gamma
    h = np.zeros(s.n)
    pos = x > 0
    h[pos] = g * (g - 1.0) * s.C[pos] * x[pos] ** (g - 2.0)
    b = s.bounded
    rem = s.W[b] - s.mu[b] * x[b]
    h[b] += 2.0 * s.W[b] ** 2 * s.mu[b] ** 2 / rem**3
    return h
