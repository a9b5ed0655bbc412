import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epcast.epidemic_models import (EpidemicParams, ModelKind, analytic_replica_count, reached_fraction,
                                    solve, write_trajectory_csv)
from epcast.errors import InvalidParams, OutOfHorizon
from oracles import euler_richardson, logistic_si, rel_sup


def states(traj):
    return np.stack([traj.s, traj.i, traj.r], axis=1)


def test_pure_decay_closed_form():
    tr = solve(EpidemicParams(100, 0.0, 0.05, 10), 100, 0.1)
    k = int(round(20 / 0.1))
    assert tr.t[k] == pytest.approx(20.0)
    assert abs(tr.i[k] - math.exp(-1)) < 1e-6
    assert abs(tr.r[k] - (1 - math.exp(-1))) < 1e-6
    assert np.all(tr.s == 99)


def test_si_logistic_matches_closed_form_and_oracle():
    p = EpidemicParams(100, 0.01, 0.0, 1, raw_beta_mode=True)
    tr = solve(p, 20, 0.1)
    exact = logistic_si(100, 0.01, tr.t)
    assert np.max(np.abs(tr.i - exact) / exact) < 1e-4
    oracle = euler_richardson(100, 0.01, 0.0, 5.0, every=5.0)
    assert abs(tr.i[50] - oracle[-1, 1]) / oracle[-1, 1] < 1e-4
    assert abs(oracle[-1, 1] - logistic_si(100, 0.01, 5.0)) / oracle[-1, 1] < 1e-4


def test_samples_on_grid():
    tr = solve(EpidemicParams(50, 0.3, 0.05, 4), 7.0, 0.5)
    assert len(tr) == 15
    assert np.allclose(tr.t, np.arange(15) * 0.5)
    assert tr.horizon == 7.0
    assert tr.samples[0] == (0.0, 49.0, 1.0, 0.0)


def test_sis_has_no_recovered():
    tr = solve(EpidemicParams(200, 0.5, 0.1, 6, ModelKind.SIS), 50)
    assert np.all(tr.r == 0)
    # endemic equilibrium I* = N(1 - gamma/(beta N))
    assert tr.i[-1] == pytest.approx(200 * (1 - 0.1 / 3.0), rel=1e-3)


@pytest.mark.parametrize("bad", [
    dict(population_n=0), dict(infectivity_lambda=1.5), dict(removal_gamma=-0.1),
    dict(mean_degree=-1), dict(mean_degree=200),
])
def test_invalid_params(bad):
    base = dict(population_n=100, infectivity_lambda=0.1, removal_gamma=0.05, mean_degree=5)
    with pytest.raises(InvalidParams):
        solve(EpidemicParams(**{**base, **bad}), 10)


def test_reached_fraction_examples():
    tr = solve(EpidemicParams(100, 0.0, 0.05, 10), 40)
    assert reached_fraction(tr, 0) == pytest.approx(0.01)
    assert all(reached_fraction(tr, t) == pytest.approx(0.01) for t in (3.3, 17, 40))
    with pytest.raises(OutOfHorizon):
        reached_fraction(tr, 41)


def test_reached_interpolates_linearly():
    tr = solve(EpidemicParams(100, 0.2, 0.05, 8), 10, 1.0)
    mid = reached_fraction(tr, 4.5)
    assert mid == pytest.approx((reached_fraction(tr, 4) + reached_fraction(tr, 5)) / 2)


def test_full_infection_approaches_one():
    tr = solve(EpidemicParams(100, 1.0, 0.05, 10), 200)
    assert reached_fraction(tr, 200) > 0.999


def test_analytic_replicas():
    tr = solve(EpidemicParams(30, 0.0, 0.0, 3), 25)
    assert analytic_replica_count(tr, 25) == pytest.approx(25.0)
    tr = solve(EpidemicParams(30, 0.0, 0.05, 3), 500)
    assert analytic_replica_count(tr, 500) == pytest.approx(20.0, rel=0.01)


def test_replica_integral_sir_below_sis():
    from epcast.tuner import TuneRequest, tune_lambda
    req = TuneRequest(100, 10, 0.05, 60, 1.0)
    lam = tune_lambda(req).lambda_star
    sir = solve(EpidemicParams(100, lam, 0.05, 10), 60)
    sis = solve(EpidemicParams(100, lam, 0.05, 10, ModelKind.SIS), 60)
    assert analytic_replica_count(sir, 60) < analytic_replica_count(sis, 60)


def test_trajectory_csv_roundtrip():
    tr = solve(EpidemicParams(40, 0.3, 0.05, 5), 2.0, 0.5)
    buf = io.StringIO()
    write_trajectory_csv(tr, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,s,i,r"
    assert len(lines) == len(tr) + 1
    row = [float(x) for x in lines[-1].split(",")]
    assert row == [tr.t[-1], tr.s[-1], tr.i[-1], tr.r[-1]]


params = st.builds(
    lambda n, lam, g, kf, sis: EpidemicParams(n, lam, g, kf * (n - 1), ModelKind.SIS if sis else ModelKind.SIR),
    st.integers(2, 2000), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.booleans(),
)


@settings(max_examples=60, deadline=None)
@given(params, st.floats(1, 80))
def test_conservation(p, horizon):
    tr = solve(p, horizon)
    assert np.max(np.abs(tr.s + tr.i + tr.r - p.population_n)) <= 1e-6 * p.population_n
    assert np.all(states(tr) >= 0)


@settings(max_examples=30, deadline=None)
@given(params, st.floats(1, 60))
def test_step_convergence(p, horizon):
    a = solve(p, horizon, 0.1).i[-1]
    b = solve(p, horizon, 0.05).i[-1]
    assert abs(a - b) <= 1e-5 * p.population_n


@settings(max_examples=40, deadline=None)
@given(params)
def test_reach_nondecreasing_in_time_sir(p):
    p = EpidemicParams(p.population_n, p.infectivity_lambda, p.removal_gamma, p.mean_degree)
    tr = solve(p, 40)
    reach = tr.i + tr.r
    assert np.all(np.diff(reach) >= -1e-9 * p.population_n)


@settings(max_examples=30, deadline=None)
@given(st.integers(10, 1000), st.floats(0.5, 30), st.floats(0, 0.3), st.floats(1, 60))
def test_reach_nondecreasing_in_lambda(n, k, g, t):
    k = min(k, n - 1)
    reach = [reached_fraction(solve(EpidemicParams(n, lam, g, k), t), t) for lam in np.linspace(0, 1, 11)]
    assert np.all(np.diff(reach) >= -1e-12)


def test_random_draws_match_euler_oracle():
    rng = np.random.default_rng(20240601)
    for _ in range(10):
        n = int(rng.integers(20, 600))
        p = EpidemicParams(n, rng.uniform(0, 1), rng.uniform(0, 0.2), min(rng.uniform(1, 30), n - 1),
                           ModelKind.SIS if rng.integers(2) else ModelKind.SIR)
        tr = solve(p, 20.0, 0.1)
        oracle = euler_richardson(n, p.beta, p.removal_gamma, 20.0, sis=p.model_kind is ModelKind.SIS)
        assert rel_sup(states(tr)[::10], oracle) <= 1e-4
        assert np.max(np.abs(tr.s + tr.i + tr.r - n)) <= 1e-6 * n
