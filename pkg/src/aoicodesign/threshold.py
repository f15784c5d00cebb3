"""Single-agent threshold policies for the decoupled (relaxed) problem.

Ages live on the lattice ``Delta + n`` (n = 0, 1, ...), where ``Delta`` is the
reset age. For a fixed ``(spec, tau)`` everything the solver needs is a
function of the tabulated costs ``J_n = J(tau, Delta + n)``:

* ``S_L = J_0 + ... + J_{L-1}``
* ``U_L = L * J_{L-1} - S_L``; the V function is ``V(h) = U_{h + r - Delta}``
* the Whittle index ``W(Delta + n) = U_{n + r + 1} / r``

None of these depend on the transmission cost C, so one table serves every C;
the optimal threshold for a given C is a binary search on the index column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .aoi import AgentSpec, DomainError, reset_age

NEVER = math.inf

SEARCH_LIMIT = 10**6
PLATEAU_RUN = 10**4
PLATEAU_TOL = 1e-12


class UnboundedSearchError(RuntimeError):
    """Threshold search ran past its bound while the cost kept growing."""


class _Curve:
    """Lazily extended cost/index table for one (agent, tau)."""

    def __init__(self, spec: AgentSpec, tau: int):
        self.tau = tau
        self.tx = spec.tx(tau)
        self.delta = reset_age(spec, tau).value
        self._delta_f = float(self.delta)
        self._cost = spec.cost
        self.costs = np.empty(0)
        self.prefix = np.zeros(1)
        self.v_table = np.zeros(1)
        self.index_col = np.zeros(1)
        self._extend(max(256, 4 * self.tx))

    def __len__(self) -> int:
        return self.costs.size

    def _extend(self, size: int) -> None:
        old = self.costs.size
        if size <= old:
            return
        ages = self._delta_f + np.arange(old, size, dtype=float)
        new = np.asarray(self._cost.eval(self.tau, ages), dtype=float)
        costs = np.concatenate([self.costs, new])
        prefix = np.concatenate([[0.0], np.cumsum(costs)])
        # U_1 = 0; U_{L+1} - U_L = L * (J_L - J_{L-1})
        span = np.arange(1, costs.size, dtype=float)
        v_table = np.concatenate([[0.0, 0.0], np.cumsum(span * np.diff(costs))])
        self.costs, self.prefix, self.v_table = costs, prefix, v_table
        self.index_col = v_table / self.tx

    def ensure(self, size: int) -> None:
        """Make J_0..J_{size-1} available."""
        if size > self.costs.size:
            self._extend(max(size, 2 * self.costs.size))

    def plateaued(self) -> bool:
        if self.costs.size < PLATEAU_RUN + 1:
            return False
        tail = self.costs[-PLATEAU_RUN - 1:]
        scale = max(1.0, abs(float(tail[-1])))
        return float(tail[-1] - tail[0]) <= PLATEAU_TOL * scale

    def threshold_offset(self, price: float) -> Optional[int]:
        """Smallest n >= 0 with C <= W(Delta + n), or None (never transmit).

        A tie C == W(Delta + n) resolves to n, the smaller threshold.
        """
        tx = self.tx
        while True:
            col = self.index_col[tx + 1:]
            if col.size and col[-1] >= price:
                return int(np.searchsorted(col, price, side="left"))
            if self.plateaued():
                return None
            if self.costs.size > SEARCH_LIMIT + tx + 1:
                raise UnboundedSearchError(
                    f"no threshold below Delta + {SEARCH_LIMIT} at C={price} (tau={self.tau})")
            self._extend(min(2 * self.costs.size, SEARCH_LIMIT + tx + 2))

    def avg_cost(self, n: int, price: float) -> float:
        span = n + self.tx
        self.ensure(span)
        return (float(self.prefix[span]) + price * self.tx) / span

    def limit_cost(self) -> float:
        return float(self.costs[-1])


def curve(spec: AgentSpec, tau: int) -> _Curve:
    tau = spec.check_tau(tau)
    c = spec._tables.get(tau)
    if c is None:
        c = spec._tables[tau] = _Curve(spec, tau)
    return c


def _offset(spec: AgentSpec, tau: int, level, lowest: int = 0) -> int:
    """Lattice offset n with H = Delta + n."""
    d = reset_age(spec, tau).value
    n = Fraction(level) - d
    if n.denominator != 1:
        raise DomainError(f"age {level} is not on the lattice {d} + k")
    if n < lowest:
        raise DomainError(f"age {level} below the domain start {d + lowest}")
    return int(n)


@dataclass(frozen=True)
class ThresholdResult:
    tau: int
    price: float
    threshold: float  # NEVER when the agent should never transmit
    offset: Optional[int]
    reset_age: Fraction
    tx: int
    avg_cost: float
    utilization: float

    @property
    def never_transmit(self) -> bool:
        return self.offset is None

    @property
    def extended_threshold(self) -> float:
        return self.threshold + self.tx


@dataclass(frozen=True)
class TauChoice:
    tau_star: int
    result: ThresholdResult
    cost_curve: dict = field(default_factory=dict)
    all_never: bool = False


def threshold_cost(spec: AgentSpec, tau: int, level, price: float) -> float:
    """Time-average cost of transmitting whenever the age reaches ``H``."""
    if price < 0:
        raise DomainError("C must be non-negative")
    n = _offset(spec, tau, level)
    return curve(spec, tau).avg_cost(n, price)


def v_function(spec: AgentSpec, tau: int, age) -> float:
    c = curve(spec, tau)
    n = _offset(spec, tau, age, lowest=1 - c.tx)
    span = n + c.tx
    c.ensure(span)
    return float(c.v_table[span])


def whittle_index(spec: AgentSpec, tau: int, level) -> float:
    """Transmission cost at which sending and waiting tie at age ``H``."""
    c = curve(spec, tau)
    n = _offset(spec, tau, level)
    c.ensure(n + c.tx + 1)
    return float(c.index_col[n + c.tx + 1])


def _result(c: _Curve, price: float, n: Optional[int]) -> ThresholdResult:
    if n is None:
        return ThresholdResult(tau=c.tau, price=price, threshold=NEVER, offset=None,
                               reset_age=c.delta, tx=c.tx, avg_cost=c.limit_cost(),
                               utilization=0.0)
    return ThresholdResult(tau=c.tau, price=price, threshold=c.delta + n, offset=n,
                           reset_age=c.delta, tx=c.tx, avg_cost=c.avg_cost(n, price),
                           utilization=c.tx / (n + c.tx))


def optimal_threshold(spec: AgentSpec, tau: int, price: float) -> ThresholdResult:
    if price < 0:
        raise DomainError("C must be non-negative")
    c = curve(spec, tau)
    return _result(c, price, c.threshold_offset(price))


def utilization(result: ThresholdResult, spec: Optional[AgentSpec] = None,
                tau: Optional[int] = None) -> float:
    """Long-run channel share r / (H + r - Delta); zero if never transmitting."""
    if result.never_transmit:
        return 0.0
    return result.tx / (result.offset + result.tx)


def best_tau(spec: AgentSpec, price: float) -> TauChoice:
    """Enumerate the admissible processing times; ties go to the smaller tau."""
    results = {tau: optimal_threshold(spec, tau, price) for tau in spec.tau_set}
    finite = [t for t in spec.tau_set if not results[t].never_transmit]
    curve_vals = {t: results[t].avg_cost for t in spec.tau_set}
    if not finite:
        t0 = spec.tau_set[0]
        return TauChoice(t0, results[t0], curve_vals, all_never=True)
    best = None
    for t in spec.tau_set:
        if best is None or curve_vals[t] < curve_vals[best]:
            best = t
    return TauChoice(best, results[best], curve_vals)
