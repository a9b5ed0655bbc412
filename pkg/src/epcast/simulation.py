"""One replication: contacts in, a finished world and its metrics out.

A replication seed is split into three independent streams (mobility,
origin choice, protocol draws) so that paired runs, e.g. tuned Epcast
against a fixed-infectivity baseline, see the same movement, the same
origins and the same uniforms.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np

from .errors import InvalidParams
from .metrics import MetricsReport, collect
from .mobility import ContactSnapshot
from .protocol import DEFAULT_BUFFER, DEFAULT_TAU_S, World
from .tuner import DEFAULT_GAMMA, DEFAULT_TOLERANCE

log = logging.getLogger(__name__)

ROUND_CAP_FACTOR = 10
# spawn key reserved for calibration pilots, disjoint from replication indices
PILOT_KEY = 2**32 - 1


class ContactSource(Protocol):
    n: int

    def __call__(self, round_: int) -> ContactSnapshot: ...


class StaticContacts:
    """The same snapshot every round."""

    def __init__(self, snap: ContactSnapshot):
        self.snap = snap
        self.n = snap.n

    def __call__(self, round_: int) -> ContactSnapshot:
        return self.snap


@dataclass(frozen=True)
class RunSettings:
    tau_s: float = DEFAULT_TAU_S
    buffer_capacity: int = DEFAULT_BUFFER
    initial_messages: int = 20
    target_fraction: float = 1.0
    deadline_s: float = 600.0
    gamma_prior: float = DEFAULT_GAMMA
    tuning: str = "homogeneous"
    fixed_beta: float | None = None
    sis: bool = False
    drop_prob: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE
    record_events: bool = False

    @property
    def kind(self) -> str:
        return "epidemic" if self.fixed_beta is not None else "epcast"


@dataclass(frozen=True)
class ReplicationSeeds:
    mobility: int
    origins: np.random.SeedSequence
    protocol: np.random.SeedSequence

    @classmethod
    def derive(cls, master_seed: int, *key: int) -> "ReplicationSeeds":
        ss = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
        mob, org, proto = ss.spawn(3)
        return cls(int(mob.generate_state(1, dtype=np.uint64)[0]), org, proto)


def simulate(contacts: ContactSource, settings: RunSettings, seeds: ReplicationSeeds | int,
             *, scenario: str = "", replication: int = 0) -> tuple[World, MetricsReport]:
    """Inject the initial batch at round 0 and step until every message expires."""
    if isinstance(seeds, (int, np.integer)):
        seeds = ReplicationSeeds.derive(int(seeds))
    n = contacts.n
    m = settings.initial_messages
    if not 1 <= m <= n:
        raise InvalidParams(f"initial_messages must lie in [1, {n}], got {m}")
    world = World(
        n,
        buffer_capacity=settings.buffer_capacity,
        tau_s=settings.tau_s,
        sis=settings.sis,
        drop_prob=settings.drop_prob,
        tuning=settings.tuning,
        gamma_prior=settings.gamma_prior,
        tolerance=settings.tolerance,
        record_events=settings.record_events,
        rng=np.random.default_rng(seeds.protocol),
    )
    world.set_contacts(contacts(0))
    origins = np.random.default_rng(seeds.origins).choice(n, size=m, replace=False)
    ids = [world.epcast(int(o), b"", settings.target_fraction, settings.deadline_s,
                        infectivity=settings.fixed_beta) for o in origins]
    cap = ROUND_CAP_FACTOR * max(1, int(settings.deadline_s // settings.tau_s))
    while world.live_messages and world.round < cap:
        world.run_round()
        if world.live_messages:
            world.set_contacts(contacts(world.round))
    report = collect(world, ids, scenario=scenario, replication=replication, kind=settings.kind)
    return world, report


def empirical_removal_rate(world: World) -> float:
    """Evictions per message-round held, pooled over every message of the run."""
    evicted = sum(t.evictions for t in world.tallies.values())
    held = sum(t.broadcasts for t in world.tallies.values())
    return evicted / held if held else 0.0


def calibrate_gamma(make_contacts: Callable[[int], ContactSource], settings: RunSettings,
                    master_seed: int, *, pilots: int = 2, max_iter: int = 8,
                    tol: float = 1e-3, start: float | None = None) -> float:
    """Removal prior that reproduces itself under the scenario's own workload.

    Starting from ``start`` (default: ``settings.gamma_prior``), run pilot
    replications tuned with the current prior, measure the pooled removal
    rate they produce, and feed it back until it moves by less than ``tol``.
    This is the value a host's online estimator settles on when the same
    traffic pattern repeats.
    """
    gamma = settings.gamma_prior if start is None else start
    for it in range(max_iter):
        trial = replace(settings, gamma_prior=gamma, record_events=False)
        rates = []
        for p in range(pilots):
            seeds = ReplicationSeeds.derive(master_seed, PILOT_KEY, p)
            world, _ = simulate(make_contacts(seeds.mobility), trial, seeds)
            rates.append(empirical_removal_rate(world))
        new = float(np.mean(rates))
        log.info("gamma calibration iteration %d: %.5f -> %.5f", it, gamma, new)
        if abs(new - gamma) < tol:
            return new
        gamma = new
    return gamma
