"""Cost functions J(tau, age).

Every model is non-negative, non-decreasing in age and non-increasing in the
processing time. ``eval`` accepts a scalar age or a numpy array of ages, which
lets the solvers tabulate a whole age lattice at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional

import numpy as np
from scipy.special import xlog1py

from .aoi import DomainError

LN2 = math.log(2.0)


class CostModel:
    kind = "abstract"

    def eval(self, tau: int, age):
        raise NotImplementedError

    def __call__(self, tau: int, age):
        return self.eval(tau, age)

    def describe(self) -> dict:
        raise NotImplementedError

    def bounded(self) -> bool:
        """True when J(tau, .) has a finite limit for every tau."""
        return False


def _table(mapping: Optional[Mapping]) -> Optional[dict]:
    if mapping is None:
        return None
    return {int(k): float(v) for k, v in dict(mapping).items()}


def _lookup(table: dict, tau: int, what: str) -> float:
    try:
        return table[int(tau)]
    except KeyError:
        raise DomainError(f"{what} undefined for tau={tau}") from None


def ride_sharing_base(tau: int, q_hat: float) -> float:
    """Fitted TSP contribution (2 + 2 exp(-0.2 tau)) * q_hat."""
    return (2.0 + 2.0 * math.exp(-0.2 * tau)) * q_hat


@dataclass(frozen=True, eq=True)
class AffineAoiCost(CostModel):
    """J(tau, A) = base(tau) + slope * A.

    ``base`` comes from ``base_table`` when given, otherwise from the fitted
    ride-sharing form scaled by the frozen queue estimate ``q_hat``.
    """

    slope: float = 1.0
    q_hat: float = 0.0
    base_table: Optional[Mapping[int, float]] = None
    kind = "affine"

    def __post_init__(self):
        if not self.slope > 0:
            raise DomainError("affine cost slope must be positive")
        if self.q_hat < 0:
            raise DomainError("q_hat must be non-negative")
        object.__setattr__(self, "base_table", _table(self.base_table))
        if self.base_table is not None:
            if any(v < 0 for v in self.base_table.values()):
                raise DomainError("affine base must be non-negative")

    def base(self, tau: int) -> float:
        if self.base_table is not None:
            return _lookup(self.base_table, tau, "affine base")
        return ride_sharing_base(tau, self.q_hat)

    def eval(self, tau, age):
        b = self.base(tau)
        if isinstance(age, np.ndarray):
            return b + self.slope * age.astype(float)
        return b + self.slope * float(age)

    def describe(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "slope": self.slope}
        if self.base_table is not None:
            d["base_table"] = dict(self.base_table)
        else:
            d["q_hat"] = self.q_hat
        return d


@dataclass(frozen=True, eq=True)
class PowerAoiCost(CostModel):
    """J(tau, A) = scale * (1 + tau_weight / tau) * A**exponent."""

    exponent: float = 1.0
    scale: float = 1.0
    tau_weight: float = 0.0
    kind = "power"

    def __post_init__(self):
        if not self.exponent > 0 or not self.scale > 0 or self.tau_weight < 0:
            raise DomainError("power cost needs exponent > 0, scale > 0, tau_weight >= 0")

    def eval(self, tau, age):
        w = self.scale * (1.0 + self.tau_weight / tau)
        if isinstance(age, np.ndarray):
            return w * np.power(np.maximum(age, 0.0), self.exponent)
        return w * max(float(age), 0.0) ** self.exponent

    def describe(self) -> dict:
        return {"kind": self.kind, "exponent": self.exponent, "scale": self.scale,
                "tau_weight": self.tau_weight}


def _entropy_deficit(d):
    """1 - H2(0.5 + d) in bits, accurate for small |d|.

    The series sum_k (2d)^(2k) / (2k (2k-1)) / ln 2 has positive terms, so it
    stays monotone in |d| where the direct formula loses digits.
    """
    d = np.abs(np.asarray(d, dtype=float))
    x = 2.0 * d
    direct = (xlog1py(1.0 + x, x) + xlog1py(1.0 - x, -x)) / (2.0 * LN2)
    x2 = x * x
    series = np.zeros_like(x2)
    term = x2.copy()
    for k in range(1, 8):
        series += term / (2 * k * (2 * k - 1))
        term = term * x2
    series /= LN2
    return np.where(x < 1e-2, series, direct)


def binary_entropy_from_offset(d):
    """H2(0.5 + d) in bits."""
    return 1.0 - _entropy_deficit(d)


def binary_entropy(mu):
    return binary_entropy_from_offset(np.asarray(mu, dtype=float) - 0.5)


def default_quality(tau, q_scale: float = 0.5, q_rate: float = 0.5):
    """Post-update occupancy confidence 1 - q_scale * exp(-q_rate * tau)."""
    return 1.0 - q_scale * math.exp(-q_rate * tau)


@dataclass(frozen=True, eq=True)
class EntropyGridCost(CostModel):
    """Entropy (bits) of a region of ``num_cells`` binary Markov cells.

    Each cell flips with probability ``flip_prob`` per slot; right after an
    update it is believed occupied with probability ``q(tau)``.
    """

    flip_prob: float
    num_cells: int = 1
    quality: Optional[Mapping[int, float]] = None
    q_scale: float = 0.5
    q_rate: float = 0.5
    kind = "entropy"

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 0.5:
            raise DomainError(f"flip_prob={self.flip_prob} outside [0, 0.5]")
        if int(self.num_cells) < 1:
            raise DomainError("num_cells must be a positive integer")
        object.__setattr__(self, "num_cells", int(self.num_cells))
        object.__setattr__(self, "quality", _table(self.quality))
        if self.quality is not None:
            taus = sorted(self.quality)
            qs = [self.quality[t] for t in taus]
            if any(quality_at < 0.5 or quality_at > 1.0 for quality_at in qs):
                raise DomainError("quality values must lie in [0.5, 1]")
            if any(a > b for a, b in zip(qs, qs[1:])):
                raise DomainError("quality must be non-decreasing in tau")
        elif not (0.0 <= self.q_scale <= 0.5 and self.q_rate >= 0.0):
            raise DomainError("default quality needs q_scale in [0, 0.5], q_rate >= 0")

    def quality_at(self, tau: int) -> float:
        if self.quality is not None:
            return _lookup(self.quality, tau, "quality")
        return default_quality(tau, self.q_scale, self.q_rate)

    def belief(self, tau, age):
        """Occupied-probability mu_1 after ``age`` slots without an update."""
        rho = 1.0 - 2.0 * self.flip_prob
        a = np.asarray(age, dtype=float)
        decay = np.power(rho, a) if rho > 0 else np.where(a == 0, 1.0, 0.0)
        out = 0.5 + (self.quality_at(tau) - 0.5) * decay
        return out if isinstance(age, np.ndarray) else float(out)

    def per_cell(self, tau, age):
        rho = 1.0 - 2.0 * self.flip_prob
        a = np.asarray(age, dtype=float)
        decay = np.power(rho, a) if rho > 0 else np.where(a == 0, 1.0, 0.0)
        ent = binary_entropy_from_offset((self.quality_at(tau) - 0.5) * decay)
        return ent if isinstance(age, np.ndarray) else float(ent)

    def eval(self, tau, age):
        return self.num_cells * self.per_cell(tau, age)

    def bounded(self) -> bool:
        return True

    def describe(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "flip_prob": self.flip_prob,
                             "cells": self.num_cells}
        if self.quality is not None:
            d["quality"] = dict(self.quality)
        else:
            d["q_scale"] = self.q_scale
            d["q_rate"] = self.q_rate
        return d


COST_KINDS = {"affine": AffineAoiCost, "power": PowerAoiCost, "entropy": EntropyGridCost}


def cost_from_descriptor(desc: Mapping) -> CostModel:
    desc = dict(desc)
    kind = desc.pop("kind", None)
    if kind == "affine":
        allowed = {"slope", "q_hat", "base_table"}
    elif kind == "power":
        allowed = {"exponent", "scale", "tau_weight"}
    elif kind == "entropy":
        allowed = {"flip_prob", "cells", "quality", "q_scale", "q_rate"}
    else:
        raise DomainError(f"unknown cost kind {kind!r}; known: {sorted(COST_KINDS)}")
    extra = set(desc) - allowed
    if extra:
        raise DomainError(f"unknown keys for {kind} cost: {sorted(extra)}")
    if kind == "entropy":
        if "flip_prob" not in desc:
            raise DomainError("entropy cost requires flip_prob")
        if "cells" in desc:
            desc["num_cells"] = desc.pop("cells")
    return COST_KINDS[kind](**desc)


def eval_cost(model: CostModel, tau: int, age) -> float:
    if tau < 1:
        raise DomainError("tau must be >= 1")
    if np.any(np.asarray(age) < 0):
        raise DomainError("age must be non-negative")
    return model.eval(tau, age)


def entropy_of_region(model: EntropyGridCost, tau: int, age) -> float:
    return model.eval(tau, age)


def assumption1_violations(model: CostModel, tau_grid: Iterable[int],
                           age_grid: Iterable[float], tol: float = 0.0) -> list[str]:
    taus = sorted(int(t) for t in tau_grid)
    ages = np.array(sorted(float(a) for a in age_grid))
    out = []
    grid = np.array([np.asarray(model.eval(t, ages), dtype=float) for t in taus])
    if np.any(grid < 0):
        out.append("negative cost")
    for i, t in enumerate(taus):
        bad = np.nonzero(np.diff(grid[i]) < -tol)[0]
        if bad.size:
            out.append(f"decreasing in age at tau={t}, age={ages[bad[0]]}")
    for i in range(len(taus) - 1):
        bad = np.nonzero(grid[i + 1] - grid[i] > tol)[0]
        if bad.size:
            out.append(f"increasing in tau between {taus[i]} and {taus[i + 1]} at age={ages[bad[0]]}")
    return out


def check_assumption1(model: CostModel, tau_grid: Iterable[int],
                      age_grid: Iterable[float]) -> bool:
    """Monotonicity in both arguments (and non-negativity) on a finite grid."""
    return not assumption1_violations(model, tau_grid, age_grid)
