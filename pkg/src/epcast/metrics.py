"""Delivery and overhead measurements over finished (or running) worlds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import InsufficientReplications, UnknownMessage
from .protocol import Event, World

REL_STDERR_LIMIT = 0.05
NOT_REACHED = "not reached"

RESULTS_COLUMNS = ("scenario", "replication", "msg", "delivered_fraction", "total_broadcasts",
                   "replicas_per_host_per_msg", "time_to_target", "type")


def _tally(world: World, msg_id: int):
    if msg_id not in world.messages:
        raise UnknownMessage(msg_id)
    return world.messages[msg_id], world.tallies[msg_id]


def delivery_ratio(world: World, msg_id: int, at_round: int | None = None) -> float:
    """Fraction of hosts that have stored ``msg_id`` by the start of ``at_round``."""
    msg, tally = _tally(world, msg_id)
    if at_round is None:
        at_round = world.round
    k = at_round - msg.injected_round
    if k < 0:
        return 0.0
    if k >= len(tally.reached_history):
        raise ValueError(f"round {at_round} has not been simulated yet")
    return tally.reached_history[k] / world.n


def empirical_replicas(world: World, msg_id: int) -> int:
    """Broadcasts of ``msg_id``: from the event log when recorded, else the online counter."""
    _, tally = _tally(world, msg_id)
    if world.event_log.enabled:
        return count_broadcasts(world.event_log, msg_id)
    return tally.broadcasts


def count_broadcasts(events: Iterable[Event], msg_id: int) -> int:
    return sum(1 for ev in events if ev.kind == "broadcast" and ev.msg == msg_id)


def time_to_target(world: World, msg_id: int, target: float | None = None) -> int | None:
    """Rounds from injection until the reached fraction first meets ``target``; None if never."""
    msg, tally = _tally(world, msg_id)
    if target is None:
        target = msg.target_fraction if msg.target_fraction is not None else 1.0
    need = target * world.n - 1e-9
    for k, reached in enumerate(tally.reached_history):
        if reached >= need:
            return k
    return None


@dataclass
class MessageMetrics:
    msg: int
    delivered_fraction: float
    total_broadcasts: int
    replicas_per_host: float
    time_to_target: int | None
    infectivity: float = float("nan")


@dataclass
class MetricsReport:
    """Per-message outcomes of one replication."""
    n: int
    messages: list[MessageMetrics]
    scenario: str = ""
    replication: int = 0
    kind: str = "epcast"
    extra: dict = field(default_factory=dict)

    @property
    def delivered_fraction(self) -> float:
        return float(np.mean([m.delivered_fraction for m in self.messages]))

    @property
    def total_broadcasts(self) -> int:
        return int(sum(m.total_broadcasts for m in self.messages))

    @property
    def replicas_per_host_per_message(self) -> float:
        return self.total_broadcasts / (self.n * len(self.messages))

    def values(self) -> dict[str, float]:
        """Scalar summary used for aggregation across replications."""
        return {
            "delivered_fraction": self.delivered_fraction,
            "total_broadcasts": float(self.total_broadcasts),
            "replicas_per_host_per_message": self.replicas_per_host_per_message,
        }


def collect(world: World, msg_ids: Sequence[int] | None = None, *, scenario: str = "",
            replication: int = 0, kind: str = "epcast") -> MetricsReport:
    ids = list(world.messages) if msg_ids is None else list(msg_ids)
    rows = []
    for m in ids:
        msg, tally = _tally(world, m)
        b = empirical_replicas(world, m)
        rows.append(MessageMetrics(
            msg=m,
            delivered_fraction=tally.reached_history[-1] / world.n,
            total_broadcasts=b,
            replicas_per_host=b / world.n,
            time_to_target=time_to_target(world, m),
            infectivity=msg.infectivity,
        ))
    return MetricsReport(world.n, rows, scenario, replication, kind)


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    stderr: float
    ci_halfwidth: float
    rel_stderr: float
    flagged: bool
    n: int


def aggregate(reports: Sequence[MetricsReport] | Sequence[dict], confidence: float = 0.95) -> dict[str, MetricSummary]:
    """Mean and standard error of each metric across replications.

    A metric is flagged when its relative standard error exceeds 5%.
    """
    if len(reports) < 2:
        raise InsufficientReplications(f"need at least 2 replications, got {len(reports)}")
    rows = [r.values() if isinstance(r, MetricsReport) else dict(r) for r in reports]
    out = {}
    for key in rows[0]:
        x = np.asarray([row[key] for row in rows], dtype=float)
        n = len(x)
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(n))
        half = float(stats.t.ppf(0.5 + confidence / 2, n - 1) * se)
        rel = se / abs(mean) if mean else (0.0 if se == 0 else math.inf)
        out[key] = MetricSummary(mean, se, half, rel, rel > REL_STDERR_LIMIT, n)
    return out


def write_results_csv(reports: Iterable[MetricsReport], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RESULTS_COLUMNS)
    for rep in reports:
        for m in rep.messages:
            writer.writerow([
                rep.scenario, rep.replication, m.msg, repr(m.delivered_fraction), m.total_broadcasts,
                repr(m.replicas_per_host), NOT_REACHED if m.time_to_target is None else m.time_to_target,
                rep.kind,
            ])
