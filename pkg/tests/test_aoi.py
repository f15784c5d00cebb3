from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from aoicodesign.aoi import AgentSpec, AoiState, DomainError, mapping_rule, reset_age, step_aoi
from aoicodesign.costs import PowerAoiCost

COST = PowerAoiCost(1.0)


def spec(taus, tx, delta=0):
    return AgentSpec(id=0, tau_set=tuple(taus), tx_len=tx, cost=COST, delta_wait=delta)


def test_reset_age_examples():
    assert reset_age(spec([2], {2: 3}, 1), 2).value == 6
    assert reset_age(spec([1], {1: 1}), 1).value == 2
    s = AgentSpec.with_rule(0, [4], "mapping_rule", COST, delta_wait=0)
    assert reset_age(s, 4).value == 11


def test_default_wait_is_half_processing_time():
    s = AgentSpec.with_rule(0, [1, 4], "identity", COST)
    assert s.delta(4) == Fraction(3, 2)
    assert reset_age(s, 4).value == Fraction(19, 2)
    assert reset_age(s, 1).value == 2


def test_mapping_rule_endpoints():
    assert mapping_rule(1) == 6
    assert mapping_rule(12) == 11


def test_reset_age_rejects_unknown_tau():
    with pytest.raises(DomainError):
        reset_age(spec([1], {1: 1}), 2)


@pytest.mark.parametrize("kwargs", [
    dict(tau_set=(), tx_len={}),
    dict(tau_set=(0,), tx_len={0: 1}),
    dict(tau_set=(1, 2), tx_len={1: 1}),
    dict(tau_set=(1,), tx_len={1: 0}),
    dict(tau_set=(1, 2, 3), tx_len={1: 1, 2: 3, 3: 2}),
    dict(tau_set=(1, 2), tx_len={1: 1, 2: 1}, delta_wait=2),
    dict(tau_set=(1,), tx_len={1: 1}, delta_wait=-1),
])
def test_agent_invariants(kwargs):
    kwargs.setdefault("delta_wait", 0)
    with pytest.raises(DomainError):
        AgentSpec(id=0, cost=COST, **kwargs)


def test_step_aoi_examples():
    s = spec([2], {2: 3})
    assert step_aoi(AoiState(5), False, s, 2).age == 6
    assert step_aoi(AoiState(20), True, s, 2, actual_wait=1).age == 6
    with pytest.raises(DomainError):
        step_aoi(AoiState(20), True, s, 2, actual_wait=2)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 50))
def test_idle_steps_accumulate(tau, tx, k):
    s = spec([tau], {tau: tx})
    state = AoiState(reset_age(s, tau).value)
    for _ in range(k):
        state = step_aoi(state, False, s, tau)
    assert state.age == reset_age(s, tau).value + k


@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_delivery_resets_to_processing_plus_wait(tau, tx, data):
    s = spec([tau], {tau: tx})
    wait = data.draw(st.integers(0, tau - 1))
    out = step_aoi(AoiState(1000), True, s, tau, actual_wait=wait)
    assert out.age == tau + tx + wait
    assert out.age >= tau + tx
