"""Random Waypoint movement in a square arena and disk-graph contact snapshots."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import InvalidParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArenaConfig:
    side_m: float = 1000.0
    range_m: float = 200.0
    speed_min_mps: float = 1.0
    speed_max_mps: float = 6.0
    pause_s: float = 0.0

    def __post_init__(self):
        if not self.side_m > 0 or not self.range_m > 0:
            raise InvalidParams("side_m and range_m must be > 0")
        if not 0 < self.speed_min_mps <= self.speed_max_mps:
            raise InvalidParams("speeds must satisfy 0 < speed_min <= speed_max")
        if self.pause_s < 0:
            raise InvalidParams("pause_s must be >= 0")
        if self.range_m > self.side_m * math.sqrt(2):
            log.warning("range %.1f m covers the whole %.1f m arena; contact graph is always complete",
                        self.range_m, self.side_m)


class ContactSnapshot:
    """Undirected contact graph over nodes ``0..n-1`` for one round.

    ``edges`` holds each pair once as ``(a, b)`` with ``a < b``, sorted.
    """

    def __init__(self, n: int, edges: np.ndarray | Iterable[tuple[int, int]] = ()):
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                       dtype=np.int64).reshape(-1, 2)
        if len(e):
            if (e[:, 0] == e[:, 1]).any():
                raise InvalidParams("self-edges are not allowed")
            if e.min() < 0 or e.max() >= n:
                raise InvalidParams("edge endpoint out of range")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.n = int(n)
        self.edges = e
        ones = np.ones(len(e), dtype=np.int32)
        upper = sparse.coo_matrix((ones, (e[:, 0], e[:, 1])), shape=(n, n))
        self.adjacency = (upper + upper.T).tocsr()
        self.degrees = np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    @classmethod
    def complete(cls, n: int) -> "ContactSnapshot":
        a, b = np.triu_indices(n, k=1)
        return cls(n, np.column_stack([a, b]))

    @classmethod
    def from_networkx(cls, graph) -> "ContactSnapshot":
        """Nodes must be labelled ``0..n-1``."""
        return cls(graph.number_of_nodes(), list(graph.edges()))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def mean_degree(self) -> float:
        return 2.0 * len(self.edges) / self.n if self.n else 0.0

    @property
    def min_degree(self) -> int:
        return int(self.degrees.min()) if self.n else 0

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}

    def neighbors(self, node: int) -> np.ndarray:
        lo, hi = self.adjacency.indptr[node], self.adjacency.indptr[node + 1]
        return self.adjacency.indices[lo:hi]

    def __repr__(self):
        return f"ContactSnapshot(n={self.n}, edges={len(self.edges)}, mean_degree={self.mean_degree:.2f})"


def _node_rng(seed: int, node: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(node,)))


@dataclass
class MobilityState:
    arena: ArenaConfig
    position: np.ndarray
    waypoint: np.ndarray
    speed: np.ndarray
    pause_remaining: np.ndarray
    rngs: list = field(repr=False)
    time_s: float = 0.0

    @property
    def n(self) -> int:
        return len(self.position)


def init_state(arena: ArenaConfig, n: int, seed: int) -> MobilityState:
    """Uniform initial positions; each node draws from its own RNG stream."""
    rngs = [_node_rng(seed, k) for k in range(n)]
    pos = np.empty((n, 2))
    wp = np.empty((n, 2))
    speed = np.empty(n)
    for k, g in enumerate(rngs):
        pos[k] = g.uniform(0.0, arena.side_m, 2)
        wp[k] = g.uniform(0.0, arena.side_m, 2)
        speed[k] = g.uniform(arena.speed_min_mps, arena.speed_max_mps)
    return MobilityState(arena, pos, wp, speed, np.zeros(n), rngs)


def advance(state: MobilityState, dt: float) -> MobilityState:
    """Move every node for ``dt`` seconds, in place; returns ``state``.

    A node that reaches its waypoint pauses ``pause_s`` and then heads to a
    fresh uniform waypoint at a fresh uniform speed, spending any leftover
    time on the new leg.
    """
    if not dt > 0:
        raise InvalidParams("dt must be > 0")
    arena = state.arena
    pos, wp, speed, pause = state.position, state.waypoint, state.speed, state.pause_remaining
    remaining = np.full(state.n, float(dt))

    while True:
        active = remaining > 0
        if not active.any():
            break
        # pausing nodes burn time first
        pausing = active & (pause > 0)
        if pausing.any():
            used = np.minimum(pause[pausing], remaining[pausing])
            pause[pausing] -= used
            remaining[pausing] -= used
        moving = (remaining > 0) & (pause <= 0)
        if not moving.any():
            break
        idx = np.flatnonzero(moving)
        delta = wp[idx] - pos[idx]
        dist = np.hypot(delta[:, 0], delta[:, 1])
        reach = speed[idx] * remaining[idx]
        short = reach < dist
        # nodes that stay on their current leg
        s_idx = idx[short]
        if len(s_idx):
            frac = (reach[short] / dist[short])[:, None]
            pos[s_idx] += delta[short] * frac
            remaining[s_idx] = 0.0
        # nodes that arrive, redraw, and continue with the residual time
        for j in np.flatnonzero(~short):
            k = idx[j]
            pos[k] = wp[k]
            remaining[k] = max(0.0, remaining[k] - dist[j] / speed[k])
            g = state.rngs[k]
            wp[k] = g.uniform(0.0, arena.side_m, 2)
            speed[k] = g.uniform(arena.speed_min_mps, arena.speed_max_mps)
            pause[k] = arena.pause_s

    np.clip(pos, 0.0, arena.side_m, out=pos)
    state.time_s += dt
    return state


def snapshot(state: MobilityState, range_m: float | None = None) -> ContactSnapshot:
    """Disk graph: an edge joins every pair at distance <= ``range_m`` (inclusive)."""
    r = state.arena.range_m if range_m is None else range_m
    pairs = cKDTree(state.position).query_pairs(r, output_type="ndarray")
    return ContactSnapshot(state.n, pairs)


class RandomWaypointContacts:
    """Contact source: one frozen snapshot per round of ``tau_s`` seconds."""

    def __init__(self, arena: ArenaConfig, n: int, seed: int, tau_s: float, warmup_s: float = 0.0):
        self.state = init_state(arena, n, seed)
        self.tau_s = tau_s
        self.n = n
        self._round = 0
        if warmup_s > 0:
            advance(self.state, warmup_s)

    def __call__(self, round_: int) -> ContactSnapshot:
        if round_ < self._round:
            raise ValueError("rounds must be requested in nondecreasing order")
        while self._round < round_:
            advance(self.state, self.tau_s)
            self._round += 1
        return snapshot(self.state)


def write_edges_csv(snapshots: Iterable[tuple[float, ContactSnapshot]], fh: IO[str],
                    time_column: str = "t") -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([time_column, "node_a", "node_b"])
    for t, snap in snapshots:
        for a, b in snap.edges:
            writer.writerow([t, int(a), int(b)])
