"""Discrete-time simulation of the shared channel (the unrelaxed problem).

Slot semantics, shared by both engines below:

* agent i samples every tau_i slots; a sample finishes processing tau_i slots
  later and replaces the buffer, whose content then ages one slot per slot;
  the first completion happens at slot phase_i + tau_i (phase drawn per seed)
  and the agent is ineligible before it;
* when the channel is free the policy picks one eligible agent, which sends
  its buffer content; the transmission holds the channel for r_i slots and
  is never preempted;
* a transmission started at slot t with buffer age b delivers at the end of
  slot t + r_i - 1, so the AoI at slot t + r_i is b + r_i;
* every slot each agent pays J_i(tau_i, A_i(t)); only slots in
  [burn_in, T) count.

``run`` jumps from one channel decision to the next and sums costs over
linear age segments with prefix sums. ``run_slotwise`` steps every slot with
the remaining-slots counter z and is kept as the reference the fast engine is
tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .aoi import AgentSpec, DomainError, reset_age
from .threshold import curve

POLICY_KINDS = ("whittle", "round-robin", "stationary-randomized", "max-age", "threshold")
ALIASES = {"randomized": "stationary-randomized", "rr": "round-robin",
           "round_robin": "round-robin", "max_age": "max-age"}


@dataclass(frozen=True)
class Policy:
    kind: str
    probs: Optional[tuple[float, ...]] = None
    thresholds: Optional[tuple[float, ...]] = None
    label: Optional[str] = None

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in POLICY_KINDS:
            raise DomainError(f"unknown policy {self.kind!r}; known: {POLICY_KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.probs is not None:
            p = tuple(float(x) for x in self.probs)
            if any(x < 0 for x in p) or not math.isclose(sum(p), 1.0, abs_tol=1e-9):
                raise DomainError("randomized probabilities must be >= 0 and sum to 1")
            object.__setattr__(self, "probs", p)
        if kind == "threshold" and self.thresholds is None:
            raise DomainError("threshold policy needs per-agent thresholds")

    @property
    def name(self) -> str:
        return self.label or self.kind


@dataclass
class SimReport:
    policy: str
    seed: int
    horizon: int
    burn_in: int
    taus: tuple[int, ...]
    agent_cost: list[float]
    mean_aoi: list[float]
    utilization: list[float]
    transmissions: list[int]
    mean_wait: list[float]
    trace: Optional[list[tuple[int, int, int, int, str]]] = None

    @property
    def total_cost(self) -> float:
        return float(sum(self.agent_cost))

    def rows(self, scenario: str = "") -> list[dict]:
        out = []
        for i, tau in enumerate(self.taus):
            out.append(dict(scenario=scenario, policy=self.policy, seed=self.seed,
                            T=self.horizon, agent=i, tau=tau,
                            time_avg_cost=self.agent_cost[i], mean_aoi=self.mean_aoi[i],
                            utilization=self.utilization[i]))
        out.append(dict(scenario=scenario, policy=self.policy, seed=self.seed,
                        T=self.horizon, agent=-1, tau="", time_avg_cost=self.total_cost,
                        mean_aoi=float(np.mean(self.mean_aoi)),
                        utilization=float(sum(self.utilization))))
        return out


REPORT_COLUMNS = ("scenario", "policy", "seed", "T", "agent", "tau",
                  "time_avg_cost", "mean_aoi", "utilization")
TRACE_COLUMNS = ("t", "agent", "aoi", "z", "event")


class _AgeCosts:
    """Prefix sums of J(tau, a) over integer ages a >= 0, grown on demand."""

    def __init__(self, spec: AgentSpec, tau: int):
        self.cost = spec.cost
        self.tau = tau
        self.prefix = np.zeros(1)
        self.grow(1024)

    def grow(self, size: int) -> None:
        old = self.prefix.size - 1
        if size <= old:
            return
        size = max(size, 2 * old)
        vals = np.asarray(self.cost.eval(self.tau, np.arange(old, size, dtype=float)), dtype=float)
        self.prefix = np.concatenate([self.prefix, self.prefix[-1] + np.cumsum(vals)])
        self.list = self.prefix.tolist()

    def span(self, a_lo: int, a_hi: int) -> float:
        """sum of J over ages a_lo .. a_hi - 1."""
        if a_hi >= len(self.list):
            self.grow(a_hi + 1)
        return self.list[a_hi] - self.list[a_lo]

    def at(self, a: int) -> float:
        return self.span(a, a + 1)


class _IndexTable:
    """Whittle index at integer ages, interpolated on the lattice Delta + n."""

    def __init__(self, spec: AgentSpec, tau: int):
        self.c = curve(spec, tau)
        self.delta = float(reset_age(spec, tau).value)
        self.vals: list[float] = []
        self.grow(512)

    def grow(self, size: int) -> None:
        size = max(size, 2 * len(self.vals))
        c = self.c
        # W(Delta + n) sits at column n + r + 1; ages below Delta - r get 0
        pos = np.arange(size, dtype=float) - self.delta + c.tx + 1
        c.ensure(int(math.ceil(pos[-1])) + 2)
        grid = np.arange(c.index_col.size, dtype=float)
        vals = np.interp(np.maximum(pos, 1.0), grid, c.index_col)
        self.vals = vals.tolist()

    def __getitem__(self, a: int) -> float:
        if a >= len(self.vals):
            self.grow(a + 1)
        return self.vals[a]


class _Setup:
    def __init__(self, agents: Sequence[AgentSpec], taus: Sequence[int], policy: Policy,
                 horizon: int, seed: int, burn_in: Optional[int]):
        if len(taus) != len(agents):
            raise DomainError("need one tau per agent")
        if horizon < 1:
            raise DomainError("horizon must be positive")
        self.n = len(agents)
        self.taus = [a.check_tau(int(t)) for a, t in zip(agents, taus)]
        self.tx = [a.tx(t) for a, t in zip(agents, self.taus)]
        self.horizon = int(horizon)
        self.t0 = int(0.1 * horizon) if burn_in is None else int(burn_in)
        if not 0 <= self.t0 < self.horizon:
            raise DomainError("burn_in must lie in [0, T)")
        self.rng = np.random.default_rng(seed)
        self.phase = [int(self.rng.integers(0, t)) for t in self.taus]
        self.first = [p + t for p, t in zip(self.phase, self.taus)]
        self.a0 = [int(math.floor(reset_age(a, t).value)) for a, t in zip(agents, self.taus)]
        self.costs = [_AgeCosts(a, t) for a, t in zip(agents, self.taus)]
        self.policy = policy
        self.index = None
        if policy.kind == "whittle":
            self.index = [_IndexTable(a, t) for a, t in zip(agents, self.taus)]
        self.probs = None
        if policy.kind == "stationary-randomized":
            p = policy.probs or tuple([1.0 / self.n] * self.n)
            if len(p) != self.n:
                raise DomainError("need one probability per agent")
            self.probs = np.asarray(p, dtype=float)
        self.thresholds = None
        if policy.kind == "threshold":
            if len(policy.thresholds) != self.n:
                raise DomainError("need one threshold per agent")
            self.thresholds = [float(age) for age in policy.thresholds]
        self.rr_next = 0
        self._uniforms: list[float] = []

    def buffer_age(self, i: int, t: int) -> int:
        return self.taus[i] + (t - self.first[i]) % self.taus[i]

    def uniform(self) -> float:
        if not self._uniforms:
            self._uniforms = self.rng.random(4096).tolist()[::-1]
        return self._uniforms.pop()

    def choose(self, t: int, ages: list[int]) -> Optional[int]:
        """Agent to start at slot t, or None to leave the channel idle."""
        elig = [i for i in range(self.n) if t >= self.first[i]]
        if not elig:
            return None
        kind = self.policy.kind
        if kind == "whittle":
            idx = self.index
            best, best_w = elig[0], idx[elig[0]][ages[elig[0]]]
            for i in elig[1:]:
                w = idx[i][ages[i]]
                if w > best_w:
                    best, best_w = i, w
            return best
        if kind == "max-age":
            best = elig[0]
            for i in elig[1:]:
                if ages[i] > ages[best]:
                    best = i
            return best
        if kind == "round-robin":
            for k in range(self.n):
                i = (self.rr_next + k) % self.n
                if t >= self.first[i]:
                    self.rr_next = (i + 1) % self.n
                    return i
        if kind == "stationary-randomized":
            w = self.probs[elig]
            total = float(w.sum())
            if total <= 0:
                return None
            draw = self.uniform() * total
            acc = 0.0
            for i, wi in zip(elig, w.tolist()):
                acc += wi
                if draw < acc:
                    return i
            return elig[-1]
        if kind == "threshold":
            ready = [i for i in elig if ages[i] >= self.thresholds[i]]
            return ready[0] if ready else None
        raise AssertionError(kind)

    def next_decision(self, t: int, ages: list[int]) -> int:
        """Earliest slot after an idle decision at t where the choice can change."""
        cands = [util for util in self.first if util > t]
        if self.policy.kind == "threshold":
            for i in range(self.n):
                wait = int(math.ceil(self.thresholds[i] - ages[i]))
                cands.append(max(t + max(wait, 1), self.first[i]))
        return min(cands) if cands else self.horizon


def _report(s: _Setup, cost_sum, aoi_sum, busy, sends, waits, trace) -> SimReport:
    window = s.horizon - s.t0
    return SimReport(
        policy=s.policy.name, seed=-1, horizon=s.horizon, burn_in=s.t0, taus=tuple(s.taus),
        agent_cost=[c / window for c in cost_sum],
        mean_aoi=[a / window for a in aoi_sum],
        utilization=[b / window for b in busy],
        transmissions=list(sends),
        mean_wait=[(w / k if k else float("nan")) for w, k in zip(waits, sends)],
        trace=trace)


def run(agents: Sequence[AgentSpec], taus: Sequence[int], policy: Policy, horizon: int,
        seed: int = 0, burn_in: Optional[int] = None, trace: bool = False) -> SimReport:
    s = _Setup(agents, taus, policy, horizon, seed, burn_in)
    n, horizon, t0 = s.n, s.horizon, s.t0
    # age of agent i at slot t is base_age[i] + t - base_t[i]
    base_age = list(s.a0)
    base_t = [0] * n
    cost_sum = [0.0] * n
    aoi_sum = [0.0] * n
    busy = [0] * n
    sends = [0] * n
    waits = [0] * n
    rows = [] if trace else None

    def close(i: int, t_end: int) -> None:
        lo, hi = max(base_t[i], t0), min(t_end, horizon)
        if hi > lo:
            a_lo = base_age[i] + lo - base_t[i]
            a_hi = base_age[i] + hi - base_t[i]
            cost_sum[i] += s.costs[i].span(a_lo, a_hi)
            aoi_sum[i] += (a_lo + a_hi - 1) * (hi - lo) / 2.0

    t = 0
    while t < horizon:
        ages = [base_age[i] + t - base_t[i] for i in range(n)]
        i = s.choose(t, ages)
        if i is None:
            t = s.next_decision(t, ages)
            continue
        tx = s.tx[i]
        b = s.buffer_age(i, t)
        t_end = t + tx
        sends[i] += 1
        waits[i] += b - s.taus[i]
        lo, hi = max(t, t0), min(t_end, horizon)
        if hi > lo:
            busy[i] += hi - lo
        if rows is not None:
            rows.append((t, i, ages[i], tx - 1, "start"))
        if t_end <= horizon:
            close(i, t_end)
            base_age[i], base_t[i] = b + tx, t_end
            if rows is not None:
                rows.append((t_end, i, b + tx, 0, "deliver"))
        t = t_end
    for i in range(n):
        close(i, horizon)
    rep = _report(s, cost_sum, aoi_sum, busy, sends, waits, rows)
    rep.seed = seed
    return rep


@dataclass
class SimAgentState:
    """Per-agent state of the slot-by-slot engine."""

    aoi: int
    tx_remaining: int = 0
    buffer_age: Optional[int] = None  # None until the first sample is processed
    phase: int = 0  # slots since the sample in processing was taken
    payload: int = 0  # buffer age at the start of the ongoing transmission


def run_slotwise(agents: Sequence[AgentSpec], taus: Sequence[int], policy: Policy,
                 horizon: int, seed: int = 0, burn_in: Optional[int] = None) -> SimReport:
    """Slot-by-slot engine: counter z, per-slot buffers and ages."""
    s = _Setup(agents, taus, policy, horizon, seed, burn_in)
    n, horizon, t0 = s.n, s.horizon, s.t0
    st = [SimAgentState(aoi=a, phase=-p) for a, p in zip(s.a0, s.phase)]
    cost_sum = [0.0] * n
    aoi_sum = [0.0] * n
    busy = [0] * n
    sends = [0] * n
    waits = [0] * n
    active: Optional[int] = None
    for t in range(horizon):
        for i, a in enumerate(st):
            if a.phase == s.taus[i]:
                a.buffer_age, a.phase = s.taus[i], 0
            elif a.buffer_age is not None:
                a.buffer_age += 1
        if t >= t0:
            for i, a in enumerate(st):
                cost_sum[i] += s.costs[i].at(a.aoi)
                aoi_sum[i] += a.aoi
        if active is None:
            active = s.choose(t, [a.aoi for a in st])
            if active is not None:
                a = st[active]
                a.payload = a.buffer_age
                a.tx_remaining = s.tx[active] - 1
                sends[active] += 1
                waits[active] += a.payload - s.taus[active]
                done = a.tx_remaining == 0
        else:
            st[active].tx_remaining -= 1
            done = st[active].tx_remaining == 0
        if active is not None and t >= t0:
            busy[active] += 1
        assert sum(a.tx_remaining > 0 for a in st) <= 1
        for a in st:
            a.aoi += 1
            a.phase += 1
        if active is not None and done:
            st[active].aoi = st[active].payload + s.tx[active]
            active = None
    rep = _report(s, cost_sum, aoi_sum, busy, sends, waits, None)
    rep.seed = seed
    return rep


@dataclass
class PolicySummary:
    policy: str
    mean: float
    stderr: float
    n: int
    costs: list[float] = field(default_factory=list)


def summarize(label: str, reports: Sequence[SimReport]) -> PolicySummary:
    costs = [tx.total_cost for tx in reports]
    n = len(costs)
    se = float(np.std(costs, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return PolicySummary(label, float(np.mean(costs)), se, n, costs)


def improvement(better: float, baseline: float) -> float:
    """Percentage cost reduction of ``better`` relative to ``baseline``."""
    return 100.0 * (baseline - better) / baseline


@dataclass
class Comparison:
    summaries: list[PolicySummary]
    reports: list[SimReport]

    def __getitem__(self, label: str) -> PolicySummary:
        for s in self.summaries:
            if s.policy == label:
                return s
        raise KeyError(label)

    def improvements(self, reference: str) -> dict[str, float]:
        ref = self[reference].mean
        return {s.policy: improvement(ref, s.mean) for s in self.summaries
                if s.policy != reference}


def compare_policies(agents: Sequence[AgentSpec], taus: Sequence[int],
                     policies: Sequence[Policy], horizon: int, seeds: Sequence[int],
                     burn_in: Optional[int] = None) -> Comparison:
    """Mean and standard error of the total cost per policy over seeds."""
    labels = [p.name for p in policies]
    if len(set(labels)) != len(labels):
        raise DomainError("policy labels must be distinct")
    reports, summaries = [], []
    for p in policies:
        reps = [run(agents, taus, p, horizon, seed=sd, burn_in=burn_in) for sd in seeds]
        reports.extend(reps)
        summaries.append(summarize(p.name, reps))
    return Comparison(summaries, reports)
