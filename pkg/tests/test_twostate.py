import math
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from conftest import identity_model
from pbnsteady.sim import MetaPredicate, SimCursor
from pbnsteady.twostate import (
    EstimatorError, PeriodicAbstractionError, TransitionCounts, TwoStateChain, TwoStateParams,
    UndefinedEstimateError, UnreachableMetaStateError, _double_until, _simple_accept, _Trajectory, asymptotic_variance, burn_in_m, c_rs,
    estimate, estimate_alpha_beta, format_range, run, safe_n0_range, sample_size_n,
)

Z95 = 1.959963984540054


class Replay:
    """Binary source that plays back a fixed sequence."""

    lag = 1

    def __init__(self, seq):
        self.seq = np.asarray(seq, dtype=np.int8)
        self.steps = 0

    def draw(self, count):
        out = self.seq[self.steps : self.steps + count]
        if out.size < count:
            out = np.concatenate([out, np.zeros(count - out.size, dtype=np.int8)])
        self.steps += count
        return out


def p_matrix(a, b):
    return np.array([[1 - a, a], [b, 1 - b]])


# -- closed forms


def test_alpha_beta_examples():
    assert estimate_alpha_beta(TransitionCounts(c01=1, c00=1917, c10=1, c11=0)) == (1 / 1918, 1.0)
    assert estimate_alpha_beta(TransitionCounts(c01=0, c00=100, c10=5, c11=5)) == (0.0, 0.5)
    assert estimate_alpha_beta(TransitionCounts(c01=0, c00=10)) == (0.0, None)


def test_counts_from_sequence():
    c = TransitionCounts.from_sequence([0, 1, 0, 1, 0, 1, 0, 1, 0, 1])
    assert (c.c01, c.c10, c.c00, c.c11) == (5, 4, 0, 0)
    assert c.total == 9
    assert TransitionCounts.from_sequence([1]).total == 0


def test_alpha_from_long_chain():
    a, b = 0.2, 0.5
    z = TwoStateChain(a, b, seed=3).draw(10**6)
    c = TransitionCounts.from_sequence(z)
    ah, bh = estimate_alpha_beta(c)
    assert abs(ah - a) <= 3 * math.sqrt(a * (1 - a) / c.from_zero)
    assert abs(bh - b) <= 3 * math.sqrt(b * (1 - b) / c.from_one)


def test_trace_formulas():
    m = burn_in_m(1 / 1918, 1.0, 1e-6)
    assert m == pytest.approx(1.8277, abs=1e-4)
    assert math.ceil(m) == 2
    assert math.ceil(sample_size_n(1 / 1918, 1.0, 1e-3, 0.95)) == 1999
    assert math.ceil(sample_size_n(1 / 1997, 1.0, 1e-3, 0.95)) == 1920


def test_burn_in_special_cases():
    assert burn_in_m(0.3, 0.7, 1e-6) == 0.0
    with pytest.raises(PeriodicAbstractionError, match="increase the lag"):
        burn_in_m(1.0, 1.0, 1e-6)
    with pytest.raises(ValueError):
        burn_in_m(0.3, 0.3, 0.0)


def test_closed_forms_against_direct_evaluation():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.uniform(1e-4, 1.0, 2)
        eps = 10.0 ** rng.uniform(-12, -3)
        r, s = 10.0 ** rng.uniform(-4, -1), rng.uniform(0.5, 0.999)
        lam = 1 - a - b
        direct_m = (math.log(eps) + math.log(a + b) - math.log(max(a, b))) / math.log(abs(lam))
        assert burn_in_m(a, b, eps) == pytest.approx(direct_m, rel=1e-12)
        zq = norm.isf((1 - s) / 2)
        direct_n = (a * b * (2 - a - b) / (a + b) ** 3) * zq * zq / (r * r)
        assert sample_size_n(a, b, r, s) == pytest.approx(direct_n, rel=1e-12)
        assert sample_size_n(a, b, r, s) == pytest.approx(sample_size_n(b, a, r, s), rel=1e-12)


def test_burn_in_matrix_power_oracle():
    a, b, eps = 0.0020214, 0.96, 1e-10
    t = math.ceil(burn_in_m(a, b, eps))
    pi = np.array([b, a]) / (a + b)
    P = p_matrix(a, b)
    assert np.max(np.abs(np.linalg.matrix_power(P, t) - pi)) < eps
    # the closed form is the exact deviation max(a,b)/(a+b)*|lambda|^t, so one
    # step earlier it is no longer below epsilon
    assert np.max(np.abs(np.linalg.matrix_power(P, t - 1) - pi)) >= eps


def test_asymptotic_variance_examples():
    assert asymptotic_variance(0.5, 0.5) == 0.25
    assert asymptotic_variance(1.0, 1.0) == 0.0
    with pytest.warns(UserWarning, match="periodic"):
        assert sample_size_n(1.0, 1.0, 1e-3, 0.95) == 0.0


def test_sample_size_resolution_floor():
    n0, r, s = 500, 1e-3, 0.95
    c = c_rs(r, s)
    assert sample_size_n(1 / n0, 1 / n0, r, s) == pytest.approx((n0 - 1) / (4 * c), rel=1e-12)
    assert sample_size_n(1 / n0, 1.0, r, s) == pytest.approx((n0 - 1) * n0 / (c * (1 + n0) ** 3), rel=1e-12)


@pytest.mark.parametrize("beta", [0.05, 0.3, 0.7, 1.0])
def test_n_unimodal_in_alpha(beta):
    alpha1 = 2 - math.sqrt(beta**2 - 2 * beta + 4)
    grid = np.linspace(1e-4, 0.999, 4001)
    vals = np.array([sample_size_n(x, beta, 1e-3, 0.95) for x in grid])
    up = grid <= alpha1
    assert np.all(np.diff(vals[up]) > 0)
    assert np.all(np.diff(vals[~up]) < 0)


def test_safe_range_examples():
    assert safe_n0_range(0.01, 0.95) == (2, 136)
    assert safe_n0_range(0.001, 0.95) == (2, 1383)
    assert safe_n0_range(0.0001, 0.9) == (2, 11628)
    assert format_range((2, 136)) == "[2,136]" and format_range(None) == "∅"
    assert safe_n0_range(0.5, 0.99) is None


def test_safe_range_matches_scan():
    for r, s in [(0.01, 0.95), (0.01, 0.9), (0.02, 0.95), (0.005, 0.99)]:
        c = c_rs(r, s)
        good = [n0 for n0 in range(2, 20000)
                if min((n0 - 1) / (4 * c), (n0 - 1) * n0 / (c * (1 + n0) ** 3)) >= 2 * n0]
        lo, hi = safe_n0_range(r, s)
        assert good == list(range(lo, hi + 1))


# -- params


def test_params_defaults_and_validation():
    p = TwoStateParams(r=1e-3)
    assert (p.epsilon, p.s, p.k, p.m0, p.heuristic) == (1e-10, 0.95, 1, 5, "simple")
    assert p.resolved_n0() == 1383
    assert TwoStateParams(r=0.5, s=0.99).resolved_n0() == 1000
    assert TwoStateParams(r=1e-3, n0=5000, heuristic="pitfall_avoidance").resolved_n0() == 1383
    with pytest.raises(EstimatorError, match="no safe"):
        TwoStateParams(r=0.5, s=0.99, heuristic="pitfall_avoidance").resolved_n0()
    for bad in ({"r": 0}, {"r": 1e-3, "s": 1.0}, {"r": 1e-3, "k": 0}, {"r": 1e-3, "heuristic": "x"}):
        with pytest.raises(ValueError):
            TwoStateParams(**bad)


# -- iterative algorithm


def test_documented_failure_trace():
    seq = np.zeros(3000, dtype=np.int8)
    seq[1000] = 1  # one visit to meta state 1 inside the pilot window
    params = TwoStateParams(r=1e-3, epsilon=1e-6, n0=1920, m0=5, heuristic="none")
    res = estimate(Replay(seq), params)
    first, second = res.trace
    assert first["alpha"] == 1 / 1918 and first["beta"] == 1.0
    assert (first["t"], first["n"], first["length"]) == (2, 1999, 1925)
    assert second["length"] - first["length"] == 76
    assert second["alpha"] == 1 / 1997 and second["n"] == 1920
    assert (res.M, res.N, res.iterations) == (2, 1920, 2)
    assert round(res.q_hat, 5) == 0.00050
    assert res.total_steps == 2001


def test_none_heuristic_undefined():
    with pytest.raises(UndefinedEstimateError):
        estimate(Replay(np.zeros(100)), TwoStateParams(r=0.01, n0=50, heuristic="none"))


def test_simple_accepts_without_doubling():
    traj = _Trajectory(Replay([0, 1] * 5), 10)
    assert _double_until(traj, 0, 10, _simple_accept) == 10
    assert len(traj) == 10


def test_simple_doubles_until_three_each_way():
    seq = np.zeros(200, dtype=np.int8)
    seq[[15, 35, 70]] = 1
    traj = _Trajectory(Replay(seq), 20)
    post = _double_until(traj, 0, 20, _simple_accept)
    assert post == 80 and len(traj) == 80


def test_simple_doubling_cap(monkeypatch):
    monkeypatch.setattr("pbnsteady.twostate.MAX_DOUBLINGS", 8)
    with pytest.raises(UnreachableMetaStateError):
        estimate(Replay(np.zeros(0)), TwoStateParams(r=0.01, n0=2, heuristic="simple"))


def test_controlled_cap(monkeypatch):
    monkeypatch.setattr("pbnsteady.twostate.MAX_DOUBLINGS", 8)
    with pytest.raises(UnreachableMetaStateError):
        estimate(Replay(np.zeros(0)), TwoStateParams(r=0.01, n0=2, heuristic="controlled"))


def test_periodic_abstraction_propagates():
    with pytest.raises(PeriodicAbstractionError):
        estimate(Replay(np.tile([0, 1], 5000)), TwoStateParams(r=0.01, n0=100, heuristic="none"))


def test_controlled_well_mixing():
    res = estimate(TwoStateChain(0.5, 0.5, seed=1),
                   TwoStateParams(r=0.01, n0=1000, heuristic="controlled"))
    rounds = [t for t in res.trace if t["phase"] == "controlled"]
    assert 1 <= len(rounds) <= 2
    assert abs(rounds[-1]["alpha"] - 0.5) <= 0.05


def test_controlled_target_interval():
    # the accuracy target is (a - a/2, a + a/2): half-width a/2
    a, b, n_src, s = 0.01, 0.5, 1000, 0.95
    var = a * (1 - a) * n_src / (n_src - 1)
    n_as = var * (norm.ppf(0.5 * (1 + s)) / (a / 2)) ** 2
    assert a - a / 2 == 0.005 and a + a / 2 == 0.015
    assert n_as * (a + b) / b == pytest.approx(1552.4, rel=1e-3)


def test_pitfall_first_estimate_avoids_critical_condition():
    r, s = 1e-3, 0.95
    lo, hi = safe_n0_range(r, s)
    for n0 in range(lo, hi + 1):
        floor = 1.0 / n0
        assert sample_size_n(floor, floor, r, s) >= 2 * n0
        assert sample_size_n(floor, 1.0, r, s) >= 2 * n0
    # a pilot with one visit to meta state 1 sits at the estimation floor
    for n0 in (100, 1000, 5000):
        used = min(n0, hi)  # out-of-range requests are clamped
        pilot = np.zeros(5 + used, dtype=np.int8)
        pilot[5 + used // 2] = 1
        tail = TwoStateChain(0.3, 0.3, seed=n0).draw(50_000)
        params = TwoStateParams(r=r, s=s, n0=n0, m0=5, heuristic="pitfall_avoidance")
        res = estimate(Replay(np.concatenate([pilot, tail])), params)
        assert res.n0 == used
        assert res.trace[0]["n"] >= 2 * used


def test_identity_model_coverage():
    model = identity_model(0.3)
    pred = MetaPredicate(((0, 1),))
    params = TwoStateParams(r=0.01)
    hits = 0
    for seed in range(100):
        res = run(SimCursor(model, seed=seed), pred, params)
        assert 0 <= res.q_hat <= 1
        assert res.M == 1 + (math.ceil(burn_in_m(res.alpha_hat, res.beta_hat, params.epsilon)) - 1)
        hits += abs(res.q_hat - 0.5) <= params.r
    assert hits >= 90  # nominal 95; 3 sigma binomial slack at 100 runs is ~6.5


def test_lag_scales_m_and_n():
    model = identity_model(0.3)
    res = run(SimCursor(model, seed=1), MetaPredicate(((0, 1),)), TwoStateParams(r=0.02, k=3))
    t = math.ceil(burn_in_m(res.alpha_hat, res.beta_hat, 1e-10))
    nn = math.ceil(sample_size_n(res.alpha_hat, res.beta_hat, 0.02, 0.95))
    assert res.M == 1 + (max(t, 1) - 1) * 3
    assert res.N == 1 + (nn - 1) * 3


def test_run_requires_perturbation():
    with pytest.raises(EstimatorError, match="ergodic"):
        run(SimCursor(identity_model(0.0), seed=0), MetaPredicate(((0, 1),)), TwoStateParams(r=0.01))


def test_stationary_start():
    a, b = 0.01, 0.02
    starts = [TwoStateChain(a, b, seed=i, start=None).draw(1)[0] for i in range(4000)]
    q = a / (a + b)
    assert abs(np.mean(starts) - q) <= 3 * math.sqrt(q * (1 - q) / 4000)


def test_chain_chunking_is_consistent():
    whole = TwoStateChain(0.1, 0.3, seed=5).draw(5000)
    chain = TwoStateChain(0.1, 0.3, seed=5)
    first = chain.draw(5000)
    assert np.array_equal(whole, first)
    assert chain.steps == 5000
    assert chain.draw(0).size == 0
