"""Deterministic SIR / SIS compartmental models on host counts.

Time is measured in protocol rounds. The infection coefficient is the
degree-adjusted ``lambda * <k> / N`` unless ``raw_beta_mode`` is set, in
which case ``infectivity_lambda`` is read as the raw contact rate beta.

Integration is classical fixed-step RK4 starting from one infective,
``S(0) = N - 1, I(0) = 1, R(0) = 0``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import IO, Iterator, NamedTuple

import numpy as np

from .errors import InvalidParams, NonFiniteState, OutOfHorizon

DEFAULT_STEP = 0.1
# substeps keep h * (beta * N + gamma) under this bound (RK4 stability/accuracy)
MAX_STIFFNESS = 0.25
# floating-point guard for tiny negative drift
NEG_CLAMP = 1e-9


class ModelKind(str, enum.Enum):
    SIR = "SIR"
    SIS = "SIS"


@dataclass(frozen=True)
class EpidemicParams:
    population_n: int
    infectivity_lambda: float
    removal_gamma: float
    mean_degree: float
    model_kind: ModelKind = ModelKind.SIR
    raw_beta_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        self.validate()

    def validate(self):
        n = self.population_n
        if int(n) != n or n < 2:
            raise InvalidParams(f"population_n must be an integer >= 2, got {n!r}")
        lam = self.infectivity_lambda
        if self.raw_beta_mode:
            if not (math.isfinite(lam) and lam >= 0):
                raise InvalidParams(f"raw beta must be finite and >= 0, got {lam!r}")
        elif not 0.0 <= lam <= 1.0:
            raise InvalidParams(f"infectivity_lambda must lie in [0, 1], got {lam!r}")
        if not (math.isfinite(self.removal_gamma) and self.removal_gamma >= 0):
            raise InvalidParams(f"removal_gamma must be >= 0, got {self.removal_gamma!r}")
        if not 0.0 <= self.mean_degree <= n - 1:
            raise InvalidParams(
                f"mean_degree must lie in [0, N-1] = [0, {n - 1}], got {self.mean_degree!r}"
            )

    @property
    def beta(self) -> float:
        """Effective per-pair contact rate used by the compartment model."""
        if self.raw_beta_mode:
            return float(self.infectivity_lambda)
        return self.infectivity_lambda * self.mean_degree / self.population_n


class Sample(NamedTuple):
    t: float
    s: float
    i: float
    r: float


@dataclass(frozen=True)
class Trajectory:
    step_size: float
    t: np.ndarray
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    population_n: int
    model_kind: ModelKind = ModelKind.SIR

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def samples(self) -> list[Sample]:
        return [Sample(*row) for row in zip(self.t.tolist(), self.s.tolist(),
                                            self.i.tolist(), self.r.tolist())]

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __len__(self):
        return len(self.t)


def _check_time(traj: Trajectory, t: float) -> float:
    # tolerate round-off from callers computing t as k * step
    slack = 1e-9 * max(1.0, traj.horizon)
    if t < -slack or t > traj.horizon + slack:
        raise OutOfHorizon(f"t={t} outside [0, {traj.horizon}]")
    return min(max(float(t), 0.0), traj.horizon)


def solve(params: EpidemicParams, horizon: float, step: float = DEFAULT_STEP) -> Trajectory:
    """Integrate the model from a single infective up to ``horizon`` rounds.

    Samples are at ``k * step``; the final step is shortened when ``horizon``
    is not a multiple of ``step`` so the last sample lands on ``horizon``.
    """
    if not (isinstance(params, EpidemicParams)):
        raise InvalidParams("params must be an EpidemicParams")
    params.validate()
    if not (math.isfinite(horizon) and horizon > 0):
        raise InvalidParams(f"horizon must be > 0, got {horizon!r}")
    if not (math.isfinite(step) and 0 < step <= horizon):
        raise InvalidParams(f"step must satisfy 0 < step <= horizon, got {step!r}")

    n_pop = float(params.population_n)
    beta = params.beta
    gamma = params.removal_gamma
    # SIS: removed hosts flow straight back into S, R stays 0
    sis = 1.0 if params.model_kind is ModelKind.SIS else 0.0

    n_steps = math.ceil(horizon / step - 1e-9)
    ts = [k * step for k in range(n_steps)] + [float(horizon)]
    s, i, r = n_pop - 1.0, 1.0, 0.0
    ss, ii, rr = [s], [i], [r]

    substeps = max(1, math.ceil(step * (beta * n_pop + gamma) / MAX_STIFFNESS))

    # right-hand sides inlined for speed; the tuner calls this in a loop
    for k in range(n_steps):
        h = (ts[k + 1] - ts[k]) / substeps
        for _ in range(substeps):
            a1 = beta * s * i
            g1 = gamma * i
            s2, i2 = s - 0.5 * h * (a1 - sis * g1), i + 0.5 * h * (a1 - g1)
            a2 = beta * s2 * i2
            g2 = gamma * i2
            s3, i3 = s - 0.5 * h * (a2 - sis * g2), i + 0.5 * h * (a2 - g2)
            a3 = beta * s3 * i3
            g3 = gamma * i3
            s4, i4 = s - h * (a3 - sis * g3), i + h * (a3 - g3)
            a4 = beta * s4 * i4
            g4 = gamma * i4
            infect = (a1 + 2 * a2 + 2 * a3 + a4) * h / 6.0
            remove = (g1 + 2 * g2 + 2 * g3 + g4) * h / 6.0
            i += infect - remove
            if sis:
                s += remove - infect
            else:
                s -= infect
                r += remove

        if not (math.isfinite(s) and math.isfinite(i) and math.isfinite(r)):
            raise NonFiniteState(f"non-finite state at t={ts[k + 1]}")
        s, i, r = _clamp(s, ts[k + 1]), _clamp(i, ts[k + 1]), _clamp(r, ts[k + 1])
        ss.append(s)
        ii.append(i)
        rr.append(r)

    return Trajectory(
        step_size=float(step),
        t=np.asarray(ts),
        s=np.asarray(ss),
        i=np.asarray(ii),
        r=np.asarray(rr),
        population_n=params.population_n,
        model_kind=params.model_kind,
    )


def _clamp(x: float, t: float) -> float:
    if x >= 0.0:
        return x
    if x >= -NEG_CLAMP:
        return 0.0
    raise NonFiniteState(f"state went negative ({x!r}) at t={t}; reduce the step")


def reached_fraction(traj: Trajectory, t: float) -> float:
    """(I(t) + R(t)) / N, linearly interpolated between samples."""
    t = _check_time(traj, t)
    reached = np.interp(t, traj.t, traj.i + traj.r)
    return float(min(max(reached / traj.population_n, 0.0), 1.0))


def analytic_replica_count(traj: Trajectory, t_end: float) -> float:
    """Trapezoidal integral of I(t) over [0, t_end]: one broadcast per infective per round."""
    t_end = _check_time(traj, t_end)
    k = int(np.searchsorted(traj.t, t_end, side="right"))
    ts = traj.t[:k]
    ys = traj.i[:k]
    if ts[-1] < t_end:
        ts = np.append(ts, t_end)
        ys = np.append(ys, np.interp(t_end, traj.t, traj.i))
    return float(np.trapezoid(ys, ts))


def write_trajectory_csv(traj: Trajectory, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "s", "i", "r"])
    for row in traj.samples:
        writer.writerow([repr(float(x)) for x in row])
