"""Round-synchronous Epcast gossip.

Every round each host rebroadcasts every unexpired message in its buffer.
A neighbour that has never stored the message keeps it with probability
lambda per received copy; once evicted, a message is never accepted again
(the recovered state). Buffers are FIFO with a fixed capacity.

All random draws for a round are taken as full vectors, one uniform per
(message, node), independent of the current state. Two worlds built from the
same seed and fed the same contacts therefore share their random numbers
even when their modes or infectivities differ.
"""
from __future__ import annotations

import functools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterator, NamedTuple

import numpy as np

from .errors import DeadlineTooShort, InvalidParams, InvalidTarget, MissingSnapshot, UnknownMessage
from .mobility import ContactSnapshot
from .tuner import DEFAULT_GAMMA, DEFAULT_TOLERANCE, TuneRequest, TuneResult, tune_lambda, tune_lambda_heterogeneous

DEFAULT_TAU_S = 10.0
DEFAULT_BUFFER = 5
DEGREE_ALPHA = 0.2
GAMMA_WINDOW = 30
# message-rounds a node must observe before its removal estimate replaces the default
GAMMA_BOOTSTRAP_ROUNDS = 10

EVENT_KINDS = ("broadcast", "store", "reject_seen", "evict", "expire")


@dataclass(frozen=True)
class Message:
    id: int
    infectivity: float
    expiry_round: int
    origin: int
    payload_len: int = 0
    injected_round: int = 0
    target_fraction: float | None = None
    tuning: TuneResult | None = None

    def __post_init__(self):
        if not 0.0 <= self.infectivity <= 1.0:
            raise InvalidParams(f"infectivity must lie in [0, 1], got {self.infectivity!r}")
        if self.expiry_round <= self.injected_round:
            raise InvalidParams("expiry_round must be after the injection round")


class Event(NamedTuple):
    round: int
    kind: str
    node: int
    msg: int
    detail: str | None = None

    def to_json(self) -> str:
        return json.dumps(self._asdict(), separators=(",", ":"))


class EventLog:
    """Append-only event record. A disabled log drops every event."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.events: list[Event] = []

    def append(self, round_, kind, node, msg, detail=None):
        if self.enabled:
            self.events.append(Event(round_, kind, int(node), int(msg), detail))

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def write_jsonl(self, fh: IO[str]) -> None:
        for ev in self.events:
            fh.write(ev.to_json())
            fh.write("\n")


@dataclass
class NodeState:
    capacity: int = DEFAULT_BUFFER
    buffer: deque = field(default_factory=deque)
    seen: set = field(default_factory=set)
    degree_est: float | None = None
    rounds_observed: int = 0
    # per-round (evictions, message-rounds held) pairs over the estimation window
    removal_window: deque = field(default_factory=lambda: deque(maxlen=GAMMA_WINDOW))
    held_total: int = 0

    @property
    def gamma_est(self) -> float:
        return estimate_rates(self)[1]

    def observe_degree(self, k: int, alpha: float = DEGREE_ALPHA) -> None:
        if self.degree_est is None:
            self.degree_est = float(k)
        else:
            self.degree_est += alpha * (k - self.degree_est)
        self.rounds_observed += 1

    def observe_removals(self, evictions: int, held: int) -> None:
        self.removal_window.append((evictions, held))
        self.held_total += held


def estimate_rates(node: NodeState, window: int | None = None,
                   default_gamma: float = DEFAULT_GAMMA) -> tuple[float, float]:
    """Current (degree, removal-rate) estimates of a node.

    Degree is an exponential moving average of observed neighbour counts.
    The removal rate is evictions per message-round held over the last
    ``window`` rounds, falling back to the default until enough
    message-rounds have been seen.
    """
    degree = node.degree_est if node.degree_est is not None else 0.0
    if node.held_total < GAMMA_BOOTSTRAP_ROUNDS:
        return degree, default_gamma
    entries = list(node.removal_window)
    if window is not None:
        entries = entries[-window:] if window > 0 else []
    evicted = sum(e for e, _ in entries)
    held = sum(h for _, h in entries)
    return degree, (evicted / held if held else 0.0)


@dataclass
class MessageRoundStats:
    broadcasts: int = 0
    stores: int = 0
    evictions: int = 0
    reached: int = 0


@dataclass
class RoundReport:
    round: int
    messages: dict[int, MessageRoundStats]

    @property
    def broadcasts(self) -> int:
        return sum(s.broadcasts for s in self.messages.values())


@dataclass
class MessageTally:
    """Online counters for one message."""
    broadcasts: int = 0
    stores: int = 0
    evictions: int = 0
    expirations: int = 0
    reached_history: list = field(default_factory=list)
    infected_history: list = field(default_factory=list)


class World:
    """Hosts, their buffers, and the current contact snapshot.

    ``sis=True`` turns off the seen-set rejection so hosts may be reinfected
    after losing a message. ``drop_prob`` adds an explicit per-round removal
    probability on top of FIFO eviction. ``gamma_prior`` is the removal rate
    hosts assume before they have observed enough traffic. ``tuning`` selects how ``epcast``
    picks the degree fed to the tuner: the origin's own estimate
    (``"homogeneous"``) or the smallest nonzero estimate in the network
    (``"heterogeneous"``).
    """

    def __init__(self, n: int, *, seed: int = 0, buffer_capacity: int = DEFAULT_BUFFER,
                 tau_s: float = DEFAULT_TAU_S, sis: bool = False, drop_prob: float = 0.0,
                 tuning: str = "homogeneous", gamma_prior: float = DEFAULT_GAMMA,
                 tolerance: float = DEFAULT_TOLERANCE,
                 record_events: bool = True, rng: np.random.Generator | None = None):
        if n < 2:
            raise InvalidParams("a world needs at least two hosts")
        if buffer_capacity < 1:
            raise InvalidParams("buffer_capacity must be >= 1")
        if not tau_s > 0:
            raise InvalidParams("tau_s must be > 0")
        if not 0.0 <= drop_prob <= 1.0:
            raise InvalidParams("drop_prob must lie in [0, 1]")
        if tuning not in ("homogeneous", "heterogeneous"):
            raise InvalidParams(f"unknown tuning mode {tuning!r}")
        self.n = int(n)
        self.round = 0
        self.tau_s = float(tau_s)
        self.buffer_capacity = int(buffer_capacity)
        self.sis = sis
        self.drop_prob = float(drop_prob)
        self.tuning = tuning
        self.gamma_prior = float(gamma_prior)
        self.tolerance = tolerance
        self.nodes = [NodeState(capacity=self.buffer_capacity) for _ in range(self.n)]
        self.contacts: ContactSnapshot | None = None
        self._contacts_round: int | None = None
        self.messages: dict[int, Message] = {}
        self.tallies: dict[int, MessageTally] = {}
        self.event_log = EventLog(record_events)
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self._holding: dict[int, np.ndarray] = {}
        self._seen: dict[int, np.ndarray] = {}
        self._live: list[int] = []
        self._next_id = 0
        # evictions per node since the last removal-rate observation
        self._evictions = np.zeros(self.n, dtype=np.int64)

    # --- contacts -----------------------------------------------------------

    def set_contacts(self, snap: ContactSnapshot) -> None:
        """Install this round's snapshot and let every host observe its degree."""
        if snap.n != self.n:
            raise InvalidParams(f"snapshot has {snap.n} nodes, world has {self.n}")
        self.contacts = snap
        self._contacts_round = self.round
        for node, k in zip(self.nodes, snap.degrees.tolist()):
            node.observe_degree(k)

    def k_min_estimate(self) -> float:
        ests = [nd.degree_est for nd in self.nodes if nd.degree_est]
        return min(ests) if ests else 0.0

    # --- injection ----------------------------------------------------------

    def epcast(self, origin: int, payload: bytes | int = b"", target_fraction: float = 1.0,
               deadline_s: float = 600.0, *, infectivity: float | None = None) -> int:
        """Inject a message at ``origin``; returns its id.

        Unless ``infectivity`` is forced, lambda comes from the tuner fed with
        the origin's degree and removal estimates.
        """
        if not 0 <= origin < self.n:
            raise InvalidParams(f"unknown origin {origin}")
        if not 0.0 < target_fraction <= 1.0:
            raise InvalidTarget(f"target fraction must lie in (0, 1], got {target_fraction!r}")
        rounds = math.floor(deadline_s / self.tau_s + 1e-9)
        if rounds < 1:
            raise DeadlineTooShort(f"deadline {deadline_s}s is shorter than one round ({self.tau_s}s)")

        tuning = None
        if infectivity is None:
            tuning = self._tune(origin, target_fraction, rounds)
            infectivity = tuning.lambda_star
        payload_len = payload if isinstance(payload, int) else len(payload)
        msg = Message(self._next_id, float(infectivity), self.round + rounds, origin,
                      payload_len, self.round, target_fraction, tuning)
        self._next_id += 1
        self.messages[msg.id] = msg
        self.tallies[msg.id] = MessageTally()
        self._holding[msg.id] = np.zeros(self.n, dtype=bool)
        self._seen[msg.id] = np.zeros(self.n, dtype=bool)
        self._live.append(msg.id)
        self._store(origin, msg.id, "origin")
        tally = self.tallies[msg.id]
        tally.reached_history.append(1)
        tally.infected_history.append(int(self._holding[msg.id].sum()))
        return msg.id

    def _tune(self, origin: int, target: float, rounds: int) -> TuneResult:
        node = self.nodes[origin]
        degree, gamma = estimate_rates(node, default_gamma=self.gamma_prior)
        degree = min(degree, self.n - 1)
        target = max(target, 1.0 / self.n)
        req = TuneRequest(self.n, degree, gamma, rounds, target, self.tolerance)
        if self.tuning == "heterogeneous":
            k_min = min(self.k_min_estimate(), self.n - 1)
            if k_min > 0:
                req = TuneRequest(self.n, max(degree, k_min), gamma, rounds, target, self.tolerance)
                return _cached_tune_het(req, k_min)
        return _cached_tune(req)

    # --- buffer operations ---------------------------------------------------

    def _store(self, node_id: int, msg_id: int, detail: str | None = None) -> int | None:
        """Put ``msg_id`` at the tail of the node's buffer; returns the evicted id, if any."""
        node = self.nodes[node_id]
        evicted = None
        if len(node.buffer) >= node.capacity:
            evicted = node.buffer.popleft()
            self._holding[evicted][node_id] = False
            self.tallies[evicted].evictions += 1
            self._evictions[node_id] += 1
            self.event_log.append(self.round, "evict", node_id, evicted, "fifo")
        node.buffer.append(msg_id)
        self._holding[msg_id][node_id] = True
        if msg_id not in node.seen:
            node.seen.add(msg_id)
            self._seen[msg_id][node_id] = True
        self.tallies[msg_id].stores += 1
        self.event_log.append(self.round, "store", node_id, msg_id, detail)
        return evicted

    def _drop(self, node_id: int, msg_id: int, kind: str, detail: str) -> None:
        self.nodes[node_id].buffer.remove(msg_id)
        self._holding[msg_id][node_id] = False
        self.event_log.append(self.round, kind, node_id, msg_id, detail)

    # --- the round -------------------------------------------------------------

    def run_round(self) -> RoundReport:
        if self.contacts is None or self._contacts_round != self.round:
            raise MissingSnapshot(f"no contact snapshot installed for round {self.round}")
        r = self.round
        live = list(self._live)
        stats = {m: MessageRoundStats() for m in live}
        held = np.fromiter((len(nd.buffer) for nd in self.nodes), dtype=np.int64, count=self.n)

        if live:
            X = np.stack([self._holding[m] for m in live])          # round-start holders
            C = (self.contacts.adjacency @ X.T.astype(np.int32)).T  # infective neighbours
            U = self.rng.random(X.shape)
            D = self.rng.random(X.shape) if self.drop_prob > 0 else None

            for j, m in enumerate(live):
                holders = np.flatnonzero(X[j])
                stats[m].broadcasts = len(holders)
                self.tallies[m].broadcasts += len(holders)
                if self.event_log.enabled:
                    for v in holders:
                        self.event_log.append(r, "broadcast", v, m)

            # explicit removals hit round-start holders only
            if D is not None:
                for j, m in enumerate(live):
                    for v in np.flatnonzero(X[j] & (D[j] < self.drop_prob)):
                        self._drop(v, m, "evict", "drop")
                        self._evictions[v] += 1
                        stats[m].evictions += 1
                        self.tallies[m].evictions += 1

            for j, m in enumerate(live):
                lam = self.messages[m].infectivity
                exposed = C[j] > 0
                if self.sis:
                    eligible = exposed & ~X[j]
                else:
                    eligible = exposed & ~self._seen[m]
                    if self.event_log.enabled:
                        for v in np.flatnonzero(exposed & self._seen[m] & ~X[j]):
                            self.event_log.append(r, "reject_seen", v, m)
                # independent Bernoulli(lam) per received copy
                p = -np.expm1(C[j] * math.log1p(-lam)) if lam < 1.0 else np.ones(self.n)
                winners = np.flatnonzero(eligible & (U[j] < p))
                for v in winners:
                    old = self._store(v, m)
                    if old is not None and old in stats:
                        stats[old].evictions += 1
                stats[m].stores = len(winners)

        for node, e, h in zip(self.nodes, self._evictions.tolist(), held.tolist()):
            node.observe_removals(e, h)
        self._evictions[:] = 0

        self.round += 1
        for m in live:
            if self.messages[m].expiry_round <= self.round:
                for v in np.flatnonzero(self._holding[m]):
                    self._drop(v, m, "expire", None)
                    self.tallies[m].expirations += 1
                self._live.remove(m)
        for m in self.messages:
            tally = self.tallies[m]
            reached = int(self._seen[m].sum())
            tally.reached_history.append(reached)
            tally.infected_history.append(int(self._holding[m].sum()))
            if m in stats:
                stats[m].reached = reached
        return RoundReport(r, stats)

    # --- queries ---------------------------------------------------------------

    def holders(self, msg_id: int) -> np.ndarray:
        self._check(msg_id)
        return self._holding[msg_id].copy()

    def seen_mask(self, msg_id: int) -> np.ndarray:
        self._check(msg_id)
        return self._seen[msg_id].copy()

    def is_live(self, msg_id: int) -> bool:
        return msg_id in self._live

    @property
    def live_messages(self) -> list[int]:
        return list(self._live)

    def _check(self, msg_id: int) -> None:
        if msg_id not in self.messages:
            raise UnknownMessage(msg_id)


@functools.lru_cache(maxsize=4096)
def _cached_tune(req: TuneRequest) -> TuneResult:
    return tune_lambda(req)


@functools.lru_cache(maxsize=4096)
def _cached_tune_het(req: TuneRequest, k_min: float) -> TuneResult:
    return tune_lambda_heterogeneous(req, k_min)


def epcast(world: World, origin: int, payload=b"", target_fraction: float = 1.0,
           deadline_s: float = 600.0, **kwargs) -> int:
    return world.epcast(origin, payload, target_fraction, deadline_s, **kwargs)


def run_round(world: World) -> RoundReport:
    return world.run_round()
