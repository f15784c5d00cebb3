"""Multi-region occupancy-grid mapping scenario.

Each region is a block of binary cells that flip independently with a
region-specific probability per slot. One agent maps one region; its update
quality improves with processing time and its update size grows with it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .aoi import AgentSpec, DomainError
from .costs import EntropyGridCost, default_quality

DEFAULT_CELLS = 1600
DEFAULT_TAUS = tuple(range(1, 13))


@dataclass(frozen=True)
class RegionModel:
    flip_prob: float
    cells: int = DEFAULT_CELLS
    quality: Optional[dict] = None
    tau_set: tuple[int, ...] = DEFAULT_TAUS
    q_scale: float = 0.5
    q_rate: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.flip_prob <= 0.5:
            raise DomainError(f"flip probability {self.flip_prob} outside (0, 0.5]")
        if self.cells < 1:
            raise DomainError("cells must be positive")

    def cost(self) -> EntropyGridCost:
        return EntropyGridCost(self.flip_prob, self.cells, self.quality,
                               q_scale=self.q_scale, q_rate=self.q_rate)

    def quality_at(self, tau: int) -> float:
        if self.quality is not None:
            return float(self.quality[tau])
        return default_quality(tau, self.q_scale, self.q_rate)


@dataclass
class MappingScenario:
    regions: list[RegionModel] = field(default_factory=list)

    @classmethod
    def log_spaced(cls, n: int = 9, p_min: float = 5e-4, p_max: float = 1e-1,
                   **region_kw) -> "MappingScenario":
        if n < 1:
            raise DomainError("need at least one region")
        if not 0 < p_min <= p_max <= 0.5:
            raise DomainError("need 0 < p_min <= p_max <= 0.5")
        ps = np.geomspace(p_min, p_max, n) if n > 1 else np.array([p_min])
        return cls([RegionModel(float(prob), **region_kw) for prob in ps])

    @property
    def flip_probs(self) -> list[float]:
        return [tx.flip_prob for tx in self.regions]


def region_agent(idx: int, region: RegionModel, delta_wait=None) -> AgentSpec:
    return AgentSpec.with_rule(idx, region.tau_set, "mapping_rule", region.cost(), delta_wait)


def build_scenario(cfg: MappingScenario | Sequence[RegionModel], delta_wait=None) -> list[AgentSpec]:
    regions = cfg.regions if isinstance(cfg, MappingScenario) else list(cfg)
    if not regions:
        raise DomainError("scenario has no regions")
    return [region_agent(i, reg, delta_wait) for i, reg in enumerate(regions)]


def entropy_curve(region: RegionModel, tau: int, ages: Iterable[float]) -> np.ndarray:
    """Region entropy (bits) at each age."""
    return np.asarray(region.cost().eval(tau, np.asarray(list(ages), dtype=float)), dtype=float)


def age_to_fraction(region: RegionModel, tau: int, frac: float = 0.9, limit: int = 10**7) -> int:
    """First integer age at which the region entropy reaches ``frac`` of its asymptote."""
    cost = region.cost()
    target = frac * region.cells
    if float(cost.eval(tau, 0.0)) >= target:
        return 0
    rho = 1.0 - 2.0 * region.flip_prob
    hi = max(1, int(math.ceil(20.0 / max(1e-300, -math.log(rho))))) if rho > 0 else 1
    hi = min(hi, limit)
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if float(cost.eval(tau, float(mid))) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def write_tau_csv(path, flip_probs: Sequence[float], taus: Sequence[int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "p", "tau_star"])
        for i, (prob, t) in enumerate(zip(flip_probs, taus)):
            w.writerow([i, repr(float(prob)), int(t)])


def write_entropy_csv(path, regions: Sequence[RegionModel], taus: Sequence[int],
                      ages: Sequence[int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "tau", "age", "entropy"])
        for reg in regions:
            for t in taus:
                for a, ent in zip(ages, entropy_curve(reg, t, ages)):
                    w.writerow([repr(reg.flip_prob), t, a, repr(float(ent))])
