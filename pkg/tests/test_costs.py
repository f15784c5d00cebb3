import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aoicodesign.aoi import DomainError
from aoicodesign.costs import (AffineAoiCost, CostModel, EntropyGridCost, PowerAoiCost,
                               binary_entropy, check_assumption1, cost_from_descriptor,
                               entropy_of_region, eval_cost)

AGES = np.arange(0, 500, dtype=float)


def test_affine_ride_sharing_value():
    c = AffineAoiCost(q_hat=10.0)
    assert eval_cost(c, 1, 0) == pytest.approx(10 * (2 + 2 * math.exp(-0.2)), abs=1e-12)
    assert eval_cost(c, 1, 0) == pytest.approx(36.375, abs=1e-3)


def test_entropy_examples():
    assert eval_cost(EntropyGridCost(0.3, num_cells=7, quality={1: 0.5}), 1, 40) == pytest.approx(7.0)
    ent = eval_cost(EntropyGridCost(0.25, quality={1: 1.0}), 1, 1)
    assert ent == pytest.approx(-(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25)), abs=1e-12)
    assert ent == pytest.approx(0.8113, abs=1e-4)


def test_entropy_of_region_examples():
    static = EntropyGridCost(0.0, quality={1: 1.0})
    assert all(entropy_of_region(static, 1, a) == 0.0 for a in (0, 5, 1000))
    fast = EntropyGridCost(0.25, quality={1: 1.0})
    assert entropy_of_region(fast, 1, 200) == pytest.approx(1.0, abs=1e-12)
    slow = EntropyGridCost(0.001, quality={1: 0.9})
    assert entropy_of_region(slow, 1, 100) > entropy_of_region(slow, 1, 10)


def test_binary_entropy_endpoints():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(1.0) == pytest.approx(0.0, abs=1e-15)


def test_default_quality_is_monotone():
    c = EntropyGridCost(0.01)
    qs = [c.quality_at(t) for t in range(1, 13)]
    assert qs == sorted(qs)
    assert qs[0] == pytest.approx(1 - 0.5 * math.exp(-0.5))


def test_assumption1_examples():
    assert check_assumption1(AffineAoiCost(q_hat=3.0), range(1, 8), AGES)
    assert check_assumption1(EntropyGridCost(0.01, 1600), range(1, 13), AGES)

    class Broken(CostModel):
        def eval(self, tau, age):
            return tau + np.asarray(age, dtype=float)

    assert not check_assumption1(Broken(), range(1, 5), AGES)
    assert not check_assumption1(AffineAoiCost(base_table={1: 1.0, 2: 2.0}), [1, 2], AGES)


@given(st.floats(1e-5, 0.5), st.floats(0.5, 1.0), st.integers(1, 12))
def test_entropy_monotone_in_age(prob, quality_at, tau):
    c = EntropyGridCost(prob, quality={tau: quality_at})
    vals = c.eval(tau, np.arange(0, 3000, dtype=float))
    assert np.all(np.diff(vals) >= 0)
    assert np.all((vals >= 0) & (vals <= 1.0))


@given(st.floats(0.5, 3.0), st.floats(0.1, 5.0), st.floats(0.0, 4.0))
def test_power_cost_satisfies_assumption1(k, scale, w):
    assert check_assumption1(PowerAoiCost(k, scale, w), range(1, 13), AGES)


def test_belief_matches_matrix_power():
    c = EntropyGridCost(0.07, quality={3: 0.8})
    flips = np.array([[0.93, 0.07], [0.07, 0.93]])
    mu = np.array([0.8, 0.2])
    for age in range(0, 60):
        assert c.belief(3, age) == pytest.approx(mu[0], abs=1e-12)
        mu = mu @ flips


def test_descriptor_round_trip():
    for model in (AffineAoiCost(2.0, q_hat=1.5), PowerAoiCost(2.0, 0.5, 1.0),
                  EntropyGridCost(0.01, 16), EntropyGridCost(0.2, 3, quality={1: 0.6, 2: 0.9})):
        assert cost_from_descriptor(model.describe()) == model


@pytest.mark.parametrize("desc", [
    {"kind": "cubic"},
    {"kind": "power", "exponnt": 2},
    {"kind": "entropy"},
    {"kind": "entropy", "flip_prob": 0.7},
    {"kind": "affine", "slope": 0},
])
def test_bad_descriptors(desc):
    with pytest.raises(DomainError):
        cost_from_descriptor(desc)


def test_eval_cost_rejects_bad_domain():
    with pytest.raises(DomainError):
        eval_cost(PowerAoiCost(), 0, 1)
    with pytest.raises(DomainError):
        eval_cost(PowerAoiCost(), 1, -1)
