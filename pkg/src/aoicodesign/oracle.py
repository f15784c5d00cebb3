"""Reference solver for the single-agent relaxed problem.

Builds the average-cost MDP over states (age, remaining transmission slots)
directly from its transition rules and solves it with relative value
iteration. It shares no code with the threshold solver beyond the cost model
and the reset age, so agreement between the two is a genuine cross-check.

Transitions, with ages indexed by offset k = age - Delta:

* idle at (k, 0)            -> (k + 1, 0)
* start at (k, 0), r == 1   -> (0, 0)             delivery
* start at (k, 0), r > 1    -> (k + 1, r - 1)
* (k, 1)                    -> (0, 0)             delivery
* (k, z), z >= 2            -> (k + 1, z - 1)

Every transmitting slot costs C on top of J(tau, age). Ages saturate at the
cap, which keeps the truncated chain unichain.

Plain value iteration converges slowly here: the chain is deterministic and
its recurrent cycle can be hundreds of slots long, so the aperiodicity
transform mixes at rate 1 - O(1 / cycle^2). Every ``eval_every`` sweeps the
greedy policy is therefore evaluated exactly and its differential values
replace the iterate (a modified-policy-iteration step). The stopping rule is
unchanged: the span of T V - V must fall below the tolerance, which brackets
the optimal average cost regardless of how V was produced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .aoi import AgentSpec, reset_age

THETA = 0.5


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncatedMdp:
    """Tabulated single-agent MDP with ages Delta .. a_max."""

    delta: float
    tx: int
    price: float
    costs: np.ndarray  # J[k] = J(tau, Delta + k), k = 0 .. n_ages - 1

    @property
    def n_ages(self) -> int:
        return self.costs.size

    @property
    def a_max(self) -> float:
        return self.delta + self.n_ages - 1

    @classmethod
    def build(cls, spec: AgentSpec, tau: int, price: float, a_max_offset: int) -> "TruncatedMdp":
        tx = spec.tx(tau)
        if a_max_offset < 10 * tx:
            raise ValueError(f"age cap must be at least Delta + 10 r = Delta + {10 * tx}")
        delta = float(reset_age(spec, tau).value)
        ages = delta + np.arange(a_max_offset + 1, dtype=float)
        costs = np.asarray(spec.cost.eval(tau, ages), dtype=float)
        return cls(delta, tx, float(price), costs)

    def bellman(self, vals: np.ndarray):
        """Return (T V, Q_idle, Q_send); V has shape (n_ages, r)."""
        n, tx, costs, price = self.n_ages, self.tx, self.costs, self.price
        up = np.minimum(np.arange(n) + 1, n - 1)
        TV = np.empty_like(vals)
        q_idle = costs + vals[up, 0]
        if tx == 1:
            q_send = price + costs + vals[0, 0]
        else:
            q_send = price + costs + vals[up, tx - 1]
            TV[:, 1] = price + costs + vals[0, 0]
            if tx > 2:
                TV[:, 2:] = (price + costs)[:, None] + vals[up][:, 1:tx - 1]
        TV[:, 0] = np.minimum(q_idle, q_send)
        return TV, q_idle, q_send

    def evaluate(self, send: np.ndarray) -> Optional[tuple[float, np.ndarray]]:
        """Gain and differential values of a deterministic policy.

        ``send[k]`` is the action at (k, 0). Returns None when the policy
        splits the chain into two recurrent classes (it sends somewhere but
        idles forever once the age saturates).
        """
        n, tx, costs, price = self.n_ages, self.tx, self.costs, self.price
        first = np.flatnonzero(send)
        never = first.size == 0
        vals = np.zeros((n, tx))
        anchor = 0.0
        if never:
            g = float(costs[-1])
            vals[:, 0] = np.cumsum((costs - g)[::-1])[::-1] - (costs[-1] - g)
            anchor = vals[0, 0]
        else:
            if not send[-1]:
                return None
            k0 = int(first[0])
            ages = np.minimum(np.arange(k0 + tx), n - 1)
            g = (float(costs[ages].sum()) + price * tx) / (k0 + tx)

        top = n - 1
        for rem in range(1, tx):
            prev = anchor if rem == 1 else vals[top, rem - 1]
            vals[top, rem] = price + costs[top] - g + prev
        if not never:
            vals[top, 0] = price + costs[top] - g + (vals[top, tx - 1] if tx > 1 else anchor)
        for k in range(n - 2, -1, -1):
            step = price + costs[k] - g
            if tx > 1:
                vals[k, 1] = step + anchor
                vals[k, 2:] = step + vals[k + 1, 1:tx - 1]
            if never:
                continue
            if send[k]:
                vals[k, 0] = step + (vals[k + 1, tx - 1] if tx > 1 else anchor)
            else:
                vals[k, 0] = costs[k] - g + vals[k + 1, 0]
        vals -= vals[0, 0]
        return g, vals


@dataclass
class OracleResult:
    lam: float
    lam_bounds: tuple[float, float]
    policy: np.ndarray  # action at (Delta + k, 0)
    values: np.ndarray  # S'(Delta + k), S'(Delta) = 0
    delta: float
    tx: int
    iterations: int
    converged: bool

    @property
    def threshold_offset(self) -> Optional[int]:
        idx = np.flatnonzero(self.policy)
        return int(idx[0]) if idx.size else None

    @property
    def threshold(self) -> float:
        k = self.threshold_offset
        return np.inf if k is None else self.delta + k

    @property
    def never_transmit(self) -> bool:
        return self.threshold_offset is None

    @property
    def a_max(self) -> float:
        return self.delta + self.policy.size - 1


def default_cap(tx: int) -> int:
    return max(200, 50 * tx)


def _greedy(q_idle, q_send, vals):
    # near-ties resolve to sending, i.e. the smaller threshold
    tie = 1e-10 * max(1.0, float(np.abs(vals).max()))
    return q_send <= q_idle + tie


def solve_mdp(spec: AgentSpec, tau: int, price: float, a_max_offset: Optional[int] = None,
              vi_tol: float = 1e-9, max_iter: int = 200_000,
              eval_every: Optional[int] = 25) -> OracleResult:
    """Relative value iteration on the truncated chain.

    ``vi_tol`` bounds the span of T V - V relative to max(1, |lambda|).
    ``eval_every=None`` runs plain relative value iteration.
    """
    tx = spec.tx(tau)
    mdp = TruncatedMdp.build(spec, tau, price, a_max_offset or default_cap(tx))
    return solve_truncated(mdp, vi_tol=vi_tol, max_iter=max_iter, eval_every=eval_every)


def solve_truncated(mdp: TruncatedMdp, vi_tol: float = 1e-9, max_iter: int = 200_000,
                    eval_every: Optional[int] = 25) -> OracleResult:
    vals = np.zeros((mdp.n_ages, mdp.tx))
    last_policy = None
    it = 0
    while it < max_iter:
        it += 1
        TV, q_idle, q_send = mdp.bellman(vals)
        diff = TV - vals
        lo, hi = float(diff.min()), float(diff.max())
        scale = max(1.0, abs(hi), abs(lo))
        if hi - lo <= vi_tol * scale:
            send = _greedy(q_idle, q_send, vals)
            return OracleResult(0.5 * (lo + hi), (lo, hi), send, vals[:, 0] - vals[0, 0],
                                mdp.delta, mdp.tx, it, True)
        if eval_every and it % eval_every == 0:
            send = _greedy(q_idle, q_send, vals)
            if last_policy is None or not np.array_equal(send, last_policy):
                ev = mdp.evaluate(send)
                last_policy = send
                if ev is not None:
                    vals = ev[1]
                    continue
        # aperiodicity transform, anchored at (Delta, 0)
        vals = (1.0 - THETA) * vals + THETA * TV
        vals -= vals[0, 0]
    TV, q_idle, q_send = mdp.bellman(vals)
    diff = TV - vals
    lo, hi = float(diff.min()), float(diff.max())
    raise OracleError(f"relative value iteration did not converge in {max_iter} "
                      f"sweeps (span {hi - lo:.3e})")


def verify_threshold_structure(result: OracleResult) -> bool:
    """True iff the greedy policy never switches from sending back to idling."""
    p = np.asarray(result.policy, dtype=bool)
    if p.size < 2:
        return True
    body = p[:-1]
    return not np.any(body[:-1] & ~body[1:])


@dataclass
class CheckedResult:
    result: OracleResult
    truncation_bound: float
    caps: tuple[int, ...]


def solve_mdp_adaptive(spec: AgentSpec, tau: int, price: float, vi_tol: float = 1e-9,
                       max_offset: int = 2**18, **kw) -> CheckedResult:
    """Double the age cap until the answer is insensitive to it.

    A cap is accepted when the greedy threshold sits in the lower half of the
    chain and lambda moved by at most ``vi_tol`` (relative) since the previous
    cap. The returned truncation bound is that last change in lambda.
    """
    tx = spec.tx(tau)
    cap = default_cap(tx)
    prev = solve_mdp(spec, tau, price, a_max_offset=cap, vi_tol=vi_tol, **kw)
    caps = [cap]
    while True:
        k = prev.threshold_offset
        settled_policy = k is not None and k <= cap // 2
        if cap * 2 > max_offset:
            return CheckedResult(prev, float("inf") if not settled_policy else 0.0, tuple(caps))
        cap *= 2
        cur = solve_mdp(spec, tau, price, a_max_offset=cap, vi_tol=vi_tol, **kw)
        caps.append(cap)
        change = abs(cur.lam - prev.lam)
        if settled_policy and change <= vi_tol * max(1.0, abs(cur.lam)):
            return CheckedResult(cur, change, tuple(caps))
        if k is None and cur.never_transmit and change <= vi_tol * max(1.0, abs(cur.lam)):
            return CheckedResult(cur, change, tuple(caps))
        prev = cur
