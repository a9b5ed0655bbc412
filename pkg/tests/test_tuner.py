import itertools
import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from epcast.errors import InvalidRequest
from epcast.tuner import (LAMBDA_RESOLUTION, TuneRequest, predicted_fraction, tune_lambda,
                          tune_lambda_heterogeneous)

MAX_ITER = math.ceil(math.log2(1 / LAMBDA_RESOLUTION)) + 2

GRID = list(itertools.product((64, 512), (5, 20), (0.0, 0.05), (0.25, 0.5, 0.9, 1.0), (30, 60)))


def check_result(req, res):
    """Feasible results round-trip; infeasible ones really cannot be reached at lambda=1."""
    assert res.iterations <= MAX_ITER
    if res.feasible:
        assert abs(predicted_fraction(req, res.lambda_star) - req.target_fraction) <= req.tolerance
        if res.lambda_star > 0:
            below = max(0.0, res.lambda_star - 2 * LAMBDA_RESOLUTION)
            assert predicted_fraction(req, below) < req.target_fraction - req.tolerance
    else:
        assert res.lambda_star == 1.0
        assert predicted_fraction(req, 1.0) < req.target_fraction - req.tolerance


def test_seed_alone_suffices():
    res = tune_lambda(TuneRequest(100, 10, 0.05, 60, 1 / 100))
    assert res.lambda_star == 0 and res.feasible


def test_round_trip_example():
    req = TuneRequest(100, 10, 0.05, 60, 0.9)
    res = tune_lambda(req)
    assert 0 < res.lambda_star < 1 and res.feasible
    check_result(req, res)


def test_below_threshold_is_infeasible():
    req = TuneRequest(100, 0.1, 1.0, 5, 1.0)
    res = tune_lambda(req)
    assert not res.feasible and res.lambda_star == 1.0
    assert predicted_fraction(req, 1.0) < 1.0 - 1e-3


@pytest.mark.parametrize("n,k,g,psi,t", GRID)
def test_grid_round_trip(n, k, g, psi, t):
    req = TuneRequest(n, k, g, t, psi)
    check_result(req, tune_lambda(req))


@pytest.mark.parametrize("bad", [
    dict(population_n=1), dict(mean_degree=-1), dict(mean_degree=100), dict(removal_gamma=-0.01),
    dict(deadline_rounds=0), dict(target_fraction=0.001), dict(target_fraction=1.01), dict(tolerance=0),
])
def test_invalid_requests(bad):
    base = dict(population_n=100, mean_degree=10, removal_gamma=0.05, deadline_rounds=60, target_fraction=0.5)
    with pytest.raises(InvalidRequest):
        tune_lambda(TuneRequest(**{**base, **bad}))


def test_heterogeneous_variant():
    req = TuneRequest(256, 12, 0.05, 60, 0.9)
    assert tune_lambda_heterogeneous(req, 12) == tune_lambda(req)
    het = tune_lambda_heterogeneous(req, 3)
    assert het.lambda_star >= tune_lambda(req).lambda_star
    assert het.lambda_star * 3 == pytest.approx(tune_lambda(TuneRequest(256, 3, 0.05, 60, 0.9)).lambda_star * 3)
    for bad in (0, -1, 13):
        with pytest.raises(InvalidRequest):
            tune_lambda_heterogeneous(req, bad)


requests = st.builds(TuneRequest, st.integers(10, 600), st.floats(1, 9), st.sampled_from([0.0, 0.02, 0.05, 0.1]),
                     st.integers(5, 80), st.floats(0.1, 1.0))


@settings(max_examples=40, deadline=None)
@given(requests)
def test_round_trip_property(req):
    check_result(req, tune_lambda(req))


@settings(max_examples=25, deadline=None)
@given(requests, st.floats(0.1, 1.0))
def test_monotone_in_target(req, other):
    lo, hi = sorted((req.target_fraction, other))
    a = tune_lambda(TuneRequest(req.population_n, req.mean_degree, req.removal_gamma, req.deadline_rounds, lo))
    b = tune_lambda(TuneRequest(req.population_n, req.mean_degree, req.removal_gamma, req.deadline_rounds, hi))
    assume(a.feasible and b.feasible)
    assert a.lambda_star <= b.lambda_star + LAMBDA_RESOLUTION


@settings(max_examples=25, deadline=None)
@given(requests, st.floats(1, 9))
def test_monotone_in_degree(req, k2):
    lo, hi = sorted((req.mean_degree, k2))
    a = tune_lambda(TuneRequest(req.population_n, lo, req.removal_gamma, req.deadline_rounds, req.target_fraction))
    b = tune_lambda(TuneRequest(req.population_n, hi, req.removal_gamma, req.deadline_rounds, req.target_fraction))
    assume(a.feasible and b.feasible)
    assert b.lambda_star <= a.lambda_star + LAMBDA_RESOLUTION
