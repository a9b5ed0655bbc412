"""Inverse problem: smallest infectivity that reaches a target fraction by a deadline.

``f(lam) = reached_fraction(solve(lam), t*) - target`` is nondecreasing in
``lam``, so plain bisection on [0, 1] is enough.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .epidemic_models import DEFAULT_STEP, EpidemicParams, ModelKind, reached_fraction, solve
from .errors import EpcastError, InvalidRequest, SolverFailure

DEFAULT_GAMMA = 0.05
DEFAULT_TOLERANCE = 1e-3
LAMBDA_RESOLUTION = 1e-6


@dataclass(frozen=True)
class TuneRequest:
    population_n: int
    mean_degree: float
    removal_gamma: float
    deadline_rounds: float
    target_fraction: float
    tolerance: float = DEFAULT_TOLERANCE

    def validate(self):
        n = self.population_n
        if int(n) != n or n < 2:
            raise InvalidRequest(f"population_n must be an integer >= 2, got {n!r}")
        if not 0 <= self.mean_degree <= n - 1:
            raise InvalidRequest(f"mean_degree must lie in [0, N-1], got {self.mean_degree!r}")
        if not (math.isfinite(self.removal_gamma) and self.removal_gamma >= 0):
            raise InvalidRequest(f"removal_gamma must be >= 0, got {self.removal_gamma!r}")
        if not (math.isfinite(self.deadline_rounds) and self.deadline_rounds > 0):
            raise InvalidRequest(f"deadline_rounds must be > 0, got {self.deadline_rounds!r}")
        if not 1.0 / n - 1e-12 <= self.target_fraction <= 1.0:
            raise InvalidRequest(
                f"target_fraction must lie in [1/N, 1] = [{1.0 / n:.6g}, 1], "
                f"got {self.target_fraction!r}"
            )
        if not self.tolerance > 0:
            raise InvalidRequest(f"tolerance must be > 0, got {self.tolerance!r}")


@dataclass(frozen=True)
class TuneResult:
    lambda_star: float
    achieved_fraction: float
    iterations: int
    feasible: bool


def predicted_fraction(req: TuneRequest, lam: float, step: float = DEFAULT_STEP) -> float:
    """Forward model: reached fraction at the deadline for infectivity ``lam``."""
    params = EpidemicParams(
        population_n=int(req.population_n),
        infectivity_lambda=lam,
        removal_gamma=req.removal_gamma,
        mean_degree=req.mean_degree,
        model_kind=ModelKind.SIR,
    )
    horizon = float(req.deadline_rounds)
    try:
        traj = solve(params, horizon, min(step, horizon))
    except EpcastError as exc:
        raise SolverFailure(str(exc)) from exc
    return reached_fraction(traj, horizon)


def tune_lambda(req: TuneRequest, step: float = DEFAULT_STEP) -> TuneResult:
    req.validate()
    target, tol = req.target_fraction, req.tolerance

    def f(lam):
        return predicted_fraction(req, lam, step) - target

    f0 = f(0.0)
    iterations = 1
    if f0 >= -tol:
        return TuneResult(0.0, f0 + target, iterations, True)
    f1 = f(1.0)
    iterations += 1
    if f1 < -tol:
        return TuneResult(1.0, f1 + target, iterations, False)

    # invariant: f(lo) < -tol <= f(hi); narrow down to the smallest admissible lambda
    lo, hi, f_hi = 0.0, 1.0, f1
    while hi - lo > LAMBDA_RESOLUTION:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        iterations += 1
        if fm >= -tol:
            hi, f_hi = mid, fm
        else:
            lo = mid
    return TuneResult(hi, f_hi + target, iterations, abs(f_hi) <= tol)


def tune_lambda_heterogeneous(req: TuneRequest, k_min: float, step: float = DEFAULT_STEP) -> TuneResult:
    """Tune against the minimum degree so the target becomes a lower bound on reach.

    Every host with degree above ``k_min`` is over-provisioned.
    """
    if not 0 < k_min <= req.mean_degree:
        raise InvalidRequest(f"k_min must satisfy 0 < k_min <= mean_degree, got {k_min!r}")
    return tune_lambda(
        TuneRequest(
            population_n=req.population_n,
            mean_degree=k_min,
            removal_gamma=req.removal_gamma,
            deadline_rounds=req.deadline_rounds,
            target_fraction=req.target_fraction,
            tolerance=req.tolerance,
        ),
        step,
    )
