import itertools
import math

import numpy as np
import pytest
from scipy import stats

from debias_lab.engine import UpdateStrategy
from debias_lab.mdp import (
    ExplorationAction,
    MdpCostParams,
    compare_actions,
    expected_exp_cost,
    expected_miss_cost,
    simulate_two_stage,
    theorem5_condition,
)
from debias_lab.policy import NoFairness, OrderingError, compute_policy, optimal_threshold

from conftest import gauss_model, single

U, I, NONE = ExplorationAction.UNIFORM, ExplorationAction.INTERMEDIATE, ExplorationAction.NO_EXPLORE


def costs(**kw):
    base = dict(L1h=1.0, L1l=0.5, L2h=10.0, L2l=1.0, gamma=0.5, N1=1000, N2=1000, eps=1.0)
    base.update(kw)
    return MdpCostParams(**base)


TRUTH = gauss_model(10.0, 7.0)


def test_cost_params_validation():
    with pytest.raises(ValueError):
        costs(L1l=2.0)
    with pytest.raises(ValueError):
        costs(L2l=20.0)
    with pytest.raises(ValueError):
        costs(gamma=1.5)
    with pytest.raises(ValueError):
        costs(N2=0)


def test_expected_miss_cost_examples():
    c = costs(L1h=1.0, L2h=1.0, L1l=0.0, L2l=0.0)
    assert expected_miss_cost(-1e9, TRUTH, c, 1000) == pytest.approx(1000 * 1.0 * 0.5)
    assert expected_miss_cost(1e9, TRUTH, c, 1000) == pytest.approx(1000 * 1.0 * 0.5)
    ref = 1000 * 0.5 * (stats.norm.cdf(-1.5) + stats.norm.cdf(-1.5))
    assert expected_miss_cost(8.5, TRUTH, c, 1000) == pytest.approx(ref, rel=1e-12)
    assert expected_miss_cost(8.5, TRUTH, c, 1000) == pytest.approx(66.8, abs=0.05)


def test_expected_exp_cost_examples():
    c = costs()
    assert expected_exp_cost(U, 8.5, 6.0, c, TRUTH, 1000, eps=0.0) == 0.0
    assert expected_exp_cost(I, 8.5, 6.0, c, TRUTH, 1000, eps=0.0) == 0.0
    assert expected_exp_cost(U, 8.5, 8.5, c, TRUTH, 1000) == 0.0
    assert expected_exp_cost(NONE, 8.5, 6.0, c, TRUTH, 1000) == 0.0
    g1 = costs(gamma=1.0)
    mass1 = stats.norm.cdf(8.5, 10) - stats.norm.cdf(6.0, 10)
    assert expected_exp_cost(I, 8.5, 6.0, g1, TRUTH, 1000) == pytest.approx(1000 * (-1.0 + 0.5) * 0.5 * mass1)
    with pytest.raises(OrderingError):
        expected_exp_cost(U, 6.0, 8.5, c, TRUTH, 1000)


@pytest.mark.parametrize(
    "L1h,L1l,L2h,L2l,gamma,eps,lb",
    list(itertools.product((1.0, 3.0), (0.2, 0.9), (5.0, 10.0), (0.5, 2.0), (0.0, 0.5, 1.0), (0.3, 1.0), (5.0, 7.5))),
)
def test_action_cost_difference_identity(L1h, L1l, L2h, L2l, gamma, eps, lb):
    c = costs(L1h=L1h, L1l=L1l, L2h=L2h, L2l=L2l, gamma=gamma, eps=eps)
    n, theta = 700, 8.5
    d1 = stats.norm.cdf(theta, 10) - stats.norm.cdf(lb, 10)
    d0 = stats.norm.cdf(theta, 7) - stats.norm.cdf(lb, 7)
    ref = n * eps * (-(L1h - (L1h - L1l)) * 0.5 * d1 + (L2h - L2l * (1 - gamma)) * 0.5 * d0)
    diff = expected_exp_cost(U, theta, lb, c, TRUTH, n) - expected_exp_cost(I, theta, lb, c, TRUTH, n)
    assert diff == pytest.approx(ref, rel=1e-10, abs=1e-9)


def test_theorem5_condition_examples():
    assert not theorem5_condition(costs(N1=1000, N2=1000), 0.5, 0.5)
    assert theorem5_condition(costs(gamma=1.0, N2=500), 0.5, 0.5)
    c = costs(gamma=0.5, N1=1000, N2=500, L1h=1.0, L2h=10.0, L2l=1.0)
    lhs = (1 - 500 / 1000) * (10 * 0.5 - 1 * 0.5)
    assert lhs == pytest.approx(2.25) and 1 * 0.5 * 0.5 == pytest.approx(0.25)
    assert theorem5_condition(c, 0.5, 0.5)


def test_no_explore_at_fixed_point():
    out = simulate_two_stage(NONE, TRUTH, TRUTH, costs(), seed=4)
    assert out.exp_cost == 0.0
    assert out.theta_2 == pytest.approx(optimal_threshold(TRUTH), abs=1e-12)
    assert out.abs_gap == pytest.approx(0.0, abs=1e-12)
    assert out.total == pytest.approx(out.exp_cost + out.miss_cost_1 + out.miss_cost_2)


@pytest.mark.parametrize("strategy", list(UpdateStrategy))
def test_gamma_zero_intermediate_matches_uniform_labels(strategy):
    init = gauss_model(9.0, 6.0)
    c = costs(gamma=0.0)
    for seed in range(5):
        u = simulate_two_stage(U, init, TRUTH, c, seed, strategy)
        i = simulate_two_stage(I, init, TRUTH, c, seed, strategy)
        assert i.theta_2 == u.theta_2 and i.miss_cost_2 == u.miss_cost_2


def test_gamma_one_unqualified_explored_cost_zero():
    # with L1 costs at the limit, Intermediate charges nothing for unqualified agents
    c = costs(gamma=1.0, L1h=1e-12, L1l=0.0)
    out = simulate_two_stage(I, gauss_model(9.0, 6.0), TRUTH, c, seed=1)
    assert abs(out.exp_cost) < 1e-6


def _realized_exp_cost(action, c, seeds):
    init = gauss_model(9.0, 6.0)
    return np.mean([simulate_two_stage(action, init, TRUTH, c, s).exp_cost for s in seeds])


@pytest.mark.parametrize("action", [U, I])
def test_realized_cost_converges_to_expectation(action):
    c = costs(N1=100_000, N2=10, eps=0.5)
    init = gauss_model(9.0, 6.0)
    pol = compute_policy(single(init), NoFairness(), c.eps)
    expected = expected_exp_cost(action, pol.theta["a"], pol.lb["a"], c, TRUTH, c.N1)
    realized = _realized_exp_cost(action, c, [11])
    assert abs(realized - expected) <= 0.02 * abs(expected)


def test_compare_actions_deterministic_and_flags():
    init = gauss_model(9.0, 6.0)
    a = compare_actions(init, TRUTH, costs(), replications=3, seed=2)
    b = compare_actions(init, TRUTH, costs(), replications=3, seed=2)
    assert a.summaries[U].mean == b.summaries[U].mean
    assert a.theorem5_ordering is None  # N1 == N2: no ordering asserted
    one = compare_actions(init, TRUTH, costs(), replications=1, seed=2)
    assert math.isnan(one.summaries[U].se["total"])
    with pytest.raises(ValueError):
        compare_actions(init, TRUTH, costs(), replications=0)
