import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from debias_lab.dist_core import DomainError, GaussianLocation, make_estimate
from debias_lab.engine import derive_rng
from debias_lab.policy import Adaptive, GroupModel, Population
from debias_lab.twoparam import (
    InfeasibleVarianceError,
    LabelMoments,
    TwoParamConfig,
    TwoParamState,
    VarianceMode,
    absorb,
    incr_mean,
    incr_var,
    mu_path,
    run_two_param,
    sigma_path,
    truncated_variance,
    untruncate_variance,
)


def test_incr_mean_examples():
    s = LabelMoments()
    incr_mean(s, 5.0)
    assert s.mu_hat == 5.0 and s.n == 1
    s = LabelMoments(n=1, mu_hat=7.0)
    incr_mean(s, 9.0)
    assert s.mu_hat == 8.0 and s.n == 2


def test_incr_mean_matches_two_pass():
    xs = derive_rng(1, 0).normal(7.0, 1.0, 1000)
    s = LabelMoments()
    for x in xs.tolist():
        incr_mean(s, x)
    assert abs(s.mu_hat - xs.mean()) <= 1e-12


def test_incr_var_examples():
    s = LabelMoments()
    for x in (6.0, 8.0):
        absorb(s, x)
    assert s.s2_hat == pytest.approx(2.0)
    c = LabelMoments()
    for _ in range(20):
        absorb(c, 3.5)
    assert c.s2_hat == 0.0
    with pytest.raises(DomainError):
        incr_var(LabelMoments(), 1.0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300))
def test_exact_variance_equals_two_pass(xs):
    s = LabelMoments()
    for x in xs:
        absorb(s, x)
    ref = float(np.var(xs, ddof=1))
    assert s.s2_hat == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_exact_variance_large_stream():
    xs = derive_rng(2, 0).normal(1e4, 2.0, 1000)
    s = LabelMoments()
    for x in xs.tolist():
        absorb(s, x)
    assert s.s2_hat == pytest.approx(np.var(xs, ddof=1), rel=1e-9)


def test_literal_mode_follows_printed_recurrence():
    xs = [6.0, 8.0, 7.0, 10.0]
    s = LabelMoments(mode=VarianceMode.PAPER_LITERAL)
    ref_s2, mu, n = 0.0, xs[0], 1
    absorb(s, xs[0])
    for x in xs[1:]:
        ref_s2 = (n - 1) / n * ref_s2 + (x * x - mu * mu) / n
        absorb(s, x)
        mu = (n * mu + x) / (n + 1)
        n += 1
    assert s.s2_hat == pytest.approx(ref_s2)
    assert s.s2_hat != pytest.approx(np.var(xs, ddof=1))


def test_state_fresh_and_reset():
    st_ = TwoParamState.fresh(1.3, 1.3, "exact")
    absorb(st_[0], 4.0)
    st_[0].reset()
    assert st_[0].n == 0 and st_[0].sigma_hat == 1.3


def test_truncated_variance_against_rejection_sampling():
    closed = truncated_variance(1.0, -1.0, 1.0, 0.0)
    phi1 = stats.norm.pdf(1.0)
    assert closed == pytest.approx(1 - 2 * phi1 / (stats.norm.cdf(1) - stats.norm.cdf(-1)), rel=1e-12)
    assert closed == pytest.approx(0.2910, abs=5e-4)
    x = derive_rng(9, 0).normal(size=2_000_000)
    kept = x[np.abs(x) <= 1.0]
    assert len(kept) > 1_000_000
    assert closed == pytest.approx(np.var(kept), rel=0.01)


def test_truncated_variance_asymmetric_matches_scipy():
    v = truncated_variance(1.7, 2.0, 9.0, 4.0)
    a, b = (2.0 - 4.0) / 1.7, (9.0 - 4.0) / 1.7
    assert v == pytest.approx(stats.truncnorm.var(a, b, loc=4.0, scale=1.7), rel=1e-10)


def test_untruncate_examples():
    s2 = truncated_variance(1.0, -1.0, 1.0, 0.0)
    assert untruncate_variance(s2, -1.0, 1.0, 0.0) == pytest.approx(1.0, abs=1e-6)
    assert untruncate_variance(truncated_variance(1.3, 3.0, 7.0, 5.0), 3.0, 7.0, 5.0) == pytest.approx(1.3, abs=1e-6)
    assert untruncate_variance(1e-12, -1.0, 1.0, 0.0) < 1e-5


def test_untruncate_errors():
    with pytest.raises(DomainError):
        untruncate_variance(0.2, -1.0, 2.0, 0.0)
    with pytest.raises(DomainError):
        untruncate_variance(0.0, -1.0, 1.0, 0.0)
    with pytest.raises(InfeasibleVarianceError):
        untruncate_variance(1.0 / 3.0, -1.0, 1.0, 0.0)


@pytest.mark.parametrize("sigma", [0.05, 0.3, 1.0, 2.5, 10.0, 100.0])
@pytest.mark.parametrize("h", [0.1, 1.0, 4.0])
def test_roundtrip_grid(sigma, h):
    mu = 3.0
    s2 = truncated_variance(sigma, mu - h, mu + h, mu)
    back = untruncate_variance(s2, mu - h, mu + h, mu, sigma_init=1.0)
    assert back == pytest.approx(sigma, rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(r1=st.floats(0.01, 0.99), r2=st.floats(0.01, 0.99), h=st.floats(0.1, 5.0))
def test_untruncate_monotone(r1, r2, h):
    lo, hi = sorted((r1, r2))
    cap = h * h / 3.0
    a = untruncate_variance(lo * cap, -h, h, 0.0)
    b = untruncate_variance(hi * cap, -h, h, 0.0)
    assert a <= b


def test_truncation_shrinks_variance():
    for sigma in (0.5, 1.0, 3.0):
        assert truncated_variance(sigma, -1.0, 1.0, 0.0) <= sigma * sigma


def _gauss(mu1, mu0, s1=1.0, s0=1.0):
    d0 = make_estimate(GaussianLocation(s0), mu0, 50)
    d1 = make_estimate(GaussianLocation(s1), mu1, 50)
    return Population({"a": GroupModel((d0, d1), 0.5)})


def test_config_validation():
    with pytest.raises(DomainError):
        bad = Population({"a": GroupModel(
            (make_estimate(GaussianLocation(1.0), 7.0, 60), make_estimate(GaussianLocation(1.0), 10.0, 50)), 0.5)})
        TwoParamConfig(bad, _gauss(10, 7)).validate()


def test_fixed_point_first_round_drift_within_noise():
    truth = _gauss(10.0, 7.0)
    cfg = TwoParamConfig(truth, truth, horizon=6_000, schedule=Adaptive(0.1, 0.1, 5000, 0.01), batch_min=200)
    d_mu, d_sigma = [], []
    for seed in range(60):
        traj = run_two_param(cfg, seed)
        if len(traj.points) < 2:
            continue
        d_mu.append(mu_path(traj, "a", 0)[1] - 7.0)
        d_sigma.append(sigma_path(traj, "a", 0)[1] - 1.0)
    assert len(d_mu) >= 30
    for d in (np.array(d_mu), np.array(d_sigma)):
        se = d.std(ddof=1) / math.sqrt(len(d))
        assert abs(d.mean()) <= 3 * se


def test_run_is_deterministic():
    cfg = TwoParamConfig(_gauss(13.0, 5.0, 1.3, 1.3), _gauss(10.0, 7.0), horizon=20_000, batch_min=200)
    a, b = run_two_param(cfg, 1), run_two_param(cfg, 1)
    assert np.array_equal(sigma_path(a, "a", 1), sigma_path(b, "a", 1))
