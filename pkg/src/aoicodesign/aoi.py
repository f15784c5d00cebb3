"""Agent description and the exact Age-of-Information recursion.

Ages are kept as ``Fraction`` so that a non-integer waiting constant, such as
the uniform-phase mean ``(tau - 1) / 2``, keeps the reset age exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Any, Callable, Mapping, Optional, Sequence, Union

Number = Union[int, Fraction]


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


def mapping_rule(tau: int) -> int:
    """Transmission length used for occupancy-grid map updates."""
    return 5 + math.ceil(tau / 2)


def identity_rule(tau: int) -> int:
    return tau


TX_RULES: dict[str, Callable[[int], int]] = {
    "mapping_rule": mapping_rule,
    "identity": identity_rule,
}


def _as_fraction(x: Any) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**6)
    if isinstance(x, str):
        return Fraction(x)
    raise DomainError(f"cannot interpret {x!r} as a rational number of slots")


def _is_monotone(values: Sequence[int]) -> bool:
    pairs = list(zip(values, values[1:]))
    return all(a <= b for a, b in pairs) or all(a >= b for a, b in pairs)


@dataclass(frozen=True, eq=False)
class AgentSpec:
    """One monitoring agent.

    ``delta_wait=None`` means the analytic waiting constant follows the
    processing time as ``(tau - 1) / 2``; any explicit value is used for every
    tau in ``tau_set``.
    """

    id: int
    tau_set: tuple[int, ...]
    tx_len: Mapping[int, int]
    cost: Any
    delta_wait: Optional[Fraction] = None
    tx_rule: Optional[str] = None
    # solver tables keyed by tau; filled lazily by the threshold solver
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        taus = tuple(sorted(int(t) for t in self.tau_set))
        if not taus:
            raise DomainError(f"agent {self.id}: tau_set is empty")
        if len(set(taus)) != len(taus):
            raise DomainError(f"agent {self.id}: tau_set has duplicates")
        if taus[0] < 1:
            raise DomainError(f"agent {self.id}: processing times must be >= 1")
        object.__setattr__(self, "tau_set", taus)

        tx = {int(k): int(v) for k, v in dict(self.tx_len).items()}
        for tau in taus:
            if tau not in tx:
                raise DomainError(f"agent {self.id}: tx_len undefined for tau={tau}")
            if tx[tau] < 1:
                raise DomainError(f"agent {self.id}: tx_len({tau}) must be >= 1")
        if not _is_monotone([tx[t] for t in taus]):
            raise DomainError(f"agent {self.id}: tx_len must be monotone over tau_set")
        object.__setattr__(self, "tx_len", tx)

        if self.delta_wait is not None:
            d = _as_fraction(self.delta_wait)
            if d < 0 or d > taus[-1] - 1:
                raise DomainError(
                    f"agent {self.id}: delta_wait={d} outside [0, {taus[-1] - 1}]"
                )
            object.__setattr__(self, "delta_wait", d)

    @classmethod
    def with_rule(cls, id: int, tau_set: Sequence[int], rule: str, cost: Any,
                  delta_wait: Optional[Number] = None) -> "AgentSpec":
        if rule not in TX_RULES:
            raise DomainError(f"unknown tx_len rule {rule!r}; known: {sorted(TX_RULES)}")
        fn = TX_RULES[rule]
        return cls(id=id, tau_set=tuple(tau_set), tx_len={t: fn(t) for t in tau_set},
                   cost=cost, delta_wait=delta_wait, tx_rule=rule)

    def check_tau(self, tau: int) -> int:
        if tau not in self.tx_len or tau not in self.tau_set:
            raise DomainError(f"agent {self.id}: tau={tau} not in tau_set {self.tau_set}")
        return int(tau)

    def tx(self, tau: int) -> int:
        return self.tx_len[self.check_tau(tau)]

    def delta(self, tau: int) -> Fraction:
        """Analytic waiting constant used at processing time ``tau``."""
        self.check_tau(tau)
        if self.delta_wait is None:
            return Fraction(tau - 1, 2)
        return self.delta_wait

    def replace(self, **changes) -> "AgentSpec":
        kw = dict(id=self.id, tau_set=self.tau_set, tx_len=self.tx_len, cost=self.cost,
                  delta_wait=self.delta_wait, tx_rule=self.tx_rule)
        kw.update(changes)
        return AgentSpec(**kw)


@dataclass(frozen=True)
class ResetAge:
    value: Fraction

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class AoiState:
    age: Fraction


def reset_age(spec: AgentSpec, tau: int) -> ResetAge:
    """tau + r(tau) + delta: the age right after a delivery."""
    tx = spec.tx(tau)
    return ResetAge(Fraction(tau) + tx + spec.delta(tau))


def step_aoi(state: AoiState, delivered: bool, spec: AgentSpec, tau: int,
             actual_wait: Number = 0) -> AoiState:
    """Advance one slot of the AoI recursion.

    On delivery the age drops to the age of the delivered update, which spent
    ``tau`` slots in processing, ``actual_wait`` in the buffer and ``r(tau)``
    on the channel.
    """
    if delivered:
        tx = spec.tx(tau)
        w = _as_fraction(actual_wait)
        if w < 0 or w > tau - 1:
            raise DomainError(f"actual_wait={w} outside [0, {tau - 1}]")
        return AoiState(Fraction(tau) + tx + w)
    return AoiState(_as_fraction(state.age) + 1)
