"""Joint choice of the channel price C and per-agent processing times.

For a price C every agent solves its own relaxed problem (best tau, then the
optimal threshold), which gives a channel share f_i. The price is raised
until the shares fit on one channel, sum f_i <= 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .aoi import AgentSpec, DomainError
from .threshold import TauChoice, best_tau, utilization

log = logging.getLogger(__name__)

MODES = ("dual-ascent", "bisection", "hybrid")


@dataclass(frozen=True)
class OptimizerConfig:
    c_init: float = 0.0
    step: float = 1.0
    eps_f: float = 1e-3
    max_iter: int = 10_000
    mode: str = "hybrid"
    # bisection stops once the bracket is this narrow relative to C
    c_tol: float = 1e-9
    ascent_iters: int = 200

    def __post_init__(self):
        if self.c_init < 0:
            raise DomainError("c_init must be >= 0")
        if not self.step > 0:
            raise DomainError("step must be > 0")
        if not self.eps_f > 0:
            raise DomainError("eps_f must be > 0")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")


@dataclass
class CodesignResult:
    c_star: float
    choices: list[TauChoice]
    total_utilization: float
    dual_value: float
    iterations: int
    converged: bool
    mode: str
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def taus(self) -> list[int]:
        return [ch.tau_star for ch in self.choices]

    @property
    def gap(self) -> float:
        """Unused channel share at the returned price (1 - f)."""
        return 1.0 - self.total_utilization


def _evaluate(agents: Sequence[AgentSpec], price: float):
    choices = [best_tau(a, price) for a in agents]
    util = sum(utilization(ch.result) for ch in choices)
    dual = sum(ch.result.avg_cost for ch in choices) - price
    return choices, util, dual


def total_utilization(agents: Sequence[AgentSpec], price: float) -> float:
    return _evaluate(agents, price)[1]


def dual_value(agents: Sequence[AgentSpec], price: float) -> float:
    """Lagrangian dual sum_i lambda_i(C) - C; a lower bound on the optimal cost."""
    if price < 0:
        raise DomainError("C must be non-negative")
    return _evaluate(agents, price)[2]


class _Run:
    def __init__(self, agents, cfg):
        self.agents = agents
        self.cfg = cfg
        self.trace = []
        self._seen = {}
        self.calls = 0

    def eval(self, price):
        self.calls += 1
        if price in self._seen:
            return self._seen[price]
        choices, util, dual = self._seen[price] = _evaluate(self.agents, price)
        self.trace.append((len(self.trace), price, util, dual))
        return choices, util, dual

    @property
    def budget_left(self):
        return self.calls < self.cfg.max_iter

    def result(self, price, choices, util, dual, converged):
        return CodesignResult(price, choices, util, dual, self.calls, converged,
                              self.cfg.mode, self.trace)


def _dual_ascent(run: _Run, price: float):
    """Price updates C <- C + step * (f - 1) until |f - 1| <= eps_f."""
    cfg = run.cfg
    state, last = None, price
    while run.budget_left:
        last, state = price, run.eval(price)
        if abs(state[1] - 1.0) <= cfg.eps_f:
            return price, state, True
        price = max(0.0, price + cfg.step * (state[1] - 1.0))
    return last, state, False


def _ascend_to_bracket(run: _Run, price: float, limit: int):
    """Ascent steps until the first C with f <= 1.

    Returns (lo, hi, hi_state): lo is the last price seen with f > 1 and hi is
    None when the step budget ran out first.
    """
    cfg = run.cfg
    lo = 0.0
    for _ in range(limit):
        if not run.budget_left:
            break
        state = run.eval(price)
        if state[1] <= 1.0:
            return lo, price, state
        lo = price
        price = price + cfg.step * (state[1] - 1.0)
    return lo, None, None


def _bisect(run: _Run, lo: float, hi: float, hi_state):
    """Shrink [lo, hi] with f(lo) > 1 >= f(hi) onto the smallest feasible C."""
    cfg = run.cfg
    while run.budget_left:
        if hi - lo <= cfg.c_tol * max(1.0, hi):
            return hi, hi_state, True
        mid = 0.5 * (lo + hi)
        state = run.eval(mid)
        util = state[1]
        if util <= 1.0:
            hi, hi_state = mid, state
            if util >= 1.0 - cfg.eps_f:
                return hi, hi_state, True
        else:
            lo = mid
    return hi, hi_state, False


def _bracket_up(run: _Run, lo: float):
    hi = max(2.0 * lo, 1.0)
    while run.budget_left:
        state = run.eval(hi)
        if state[1] <= 1.0:
            return lo, hi, state
        lo, hi = hi, 2.0 * hi
    return None


def optimize(agents: Sequence[AgentSpec], cfg: OptimizerConfig = OptimizerConfig()) -> CodesignResult:
    if not agents:
        raise DomainError("need at least one agent")
    run = _Run(list(agents), cfg)

    zero = run.eval(0.0)
    if zero[1] <= 1.0:
        # the channel constraint is slack even when transmission is free
        return run.result(0.0, *zero, converged=True)

    if cfg.mode == "dual-ascent":
        price, state, converged = _dual_ascent(run, cfg.c_init)
        return run.result(price, *state, converged=converged)

    lo, hi, hi_state = 0.0, None, None
    if cfg.mode == "hybrid":
        lo, hi, hi_state = _ascend_to_bracket(run, cfg.c_init,
                                              min(cfg.ascent_iters, cfg.max_iter))
        if hi is not None and hi_state[1] >= 1.0 - cfg.eps_f:
            return run.result(hi, *hi_state, converged=True)
    elif cfg.c_init > 0:
        state = run.eval(cfg.c_init)
        if state[1] <= 1.0:
            hi, hi_state = cfg.c_init, state
        else:
            lo = cfg.c_init

    if hi is None:
        found = _bracket_up(run, lo)
        if found is None:
            last = run.trace[-1]
            choices, util, dual = _evaluate(run.agents, last[1])
            return run.result(last[1], choices, util, dual, converged=False)
        lo, hi, hi_state = found

    price, state, converged = _bisect(run, lo, hi, hi_state)
    if not converged:
        log.warning("co-design stopped after %d evaluations without converging", run.calls)
    return run.result(price, *state, converged=converged)
