"""Co-location traces turned into time-varying contact graphs.

A trace is a CSV with header ``node_id,location_id,start_s,end_s``: one row
per association of a node (a MAC, a student) with a location (an access
point, a classroom). Time is cut into slots of ``slot_s`` seconds; every
node present at a location during any part of a slot is connected to every
other node present at that location in the same slot.
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from dataclasses import dataclass, replace
from itertools import combinations
from typing import IO, Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EmptyTrace, InvalidParams, ParseError
from .mobility import ContactSnapshot

HEADER = ("node_id", "location_id", "start_s", "end_s")
DEFAULT_SLOT_S = 60.0
DEFAULT_MIN_DURATION_S = 60.0


@dataclass(frozen=True)
class ColocationRecord:
    node_id: str
    location_id: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise InvalidParams(f"record for {self.node_id!r} ends before it starts")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def read_colocation_records(source: str | os.PathLike | IO[str]) -> list[ColocationRecord]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_colocation_records(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise ParseError(f"expected header {','.join(HEADER)}, got {header!r}", line=1)
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
        node, loc, start, end = (c.strip() for c in row)
        if not node or not loc:
            raise ParseError("empty node_id or location_id", line=lineno)
        try:
            start_f, end_f = float(start), float(end)
        except ValueError:
            raise ParseError(f"non-numeric time in {row!r}", line=lineno) from None
        if not (math.isfinite(start_f) and math.isfinite(end_f)):
            raise ParseError("non-finite time", line=lineno)
        if not end_f > start_f:
            raise ParseError(f"end_s ({end_f}) must be greater than start_s ({start_f})", line=lineno)
        records.append(ColocationRecord(node, loc, start_f, end_f))
    return records


def write_colocation_records(records: Iterable[ColocationRecord], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(HEADER)
    for rec in records:
        writer.writerow([rec.node_id, rec.location_id, repr(rec.start_s), repr(rec.end_s)])


def filter_short_contacts(records: Iterable[ColocationRecord], min_duration_s: float = DEFAULT_MIN_DURATION_S,
                          window_start_s: float | None = None,
                          window_end_s: float | None = None) -> list[ColocationRecord]:
    """Clip records to the window, then drop those shorter than ``min_duration_s``.

    A record exactly ``min_duration_s`` long is kept.
    """
    if min_duration_s < 0:
        raise InvalidParams("min_duration_s must be >= 0")
    lo = -math.inf if window_start_s is None else window_start_s
    hi = math.inf if window_end_s is None else window_end_s
    if not lo < hi:
        raise InvalidParams("window_start_s must be before window_end_s")
    out = []
    for rec in records:
        start, end = max(rec.start_s, lo), min(rec.end_s, hi)
        if end <= start or end - start < min_duration_s:
            continue
        if (start, end) != (rec.start_s, rec.end_s):
            rec = replace(rec, start_s=start, end_s=end)
        out.append(rec)
    return out


def _slot_span(start: float, end: float, t0: float, slot_s: float) -> range:
    """Slots whose interval overlaps (start, end) by a positive amount."""
    first = math.floor((start - t0) / slot_s)
    last = math.ceil((end - t0) / slot_s) - 1
    return range(max(first, 0), last + 1)


class TimeVaryingGraph:
    """One contact snapshot per slot, over a fixed universe of node ids."""

    def __init__(self, slot_s: float, t0: float, node_universe: Sequence[str],
                 slots: Sequence[ContactSnapshot]):
        self.slot_s = float(slot_s)
        self.t0 = float(t0)
        self.node_universe = list(node_universe)
        self.index = {node: k for k, node in enumerate(self.node_universe)}
        self.slots = list(slots)

    @property
    def n(self) -> int:
        return len(self.node_universe)

    @property
    def end_s(self) -> float:
        return self.t0 + len(self.slots) * self.slot_s

    def __len__(self):
        return len(self.slots)

    def slot_index(self, time_s: float) -> int:
        return math.floor((time_s - self.t0) / self.slot_s)

    def snapshot_at(self, time_s: float) -> ContactSnapshot:
        """Snapshot of the slot containing ``time_s``; empty outside the trace."""
        k = self.slot_index(time_s)
        if 0 <= k < len(self.slots):
            return self.slots[k]
        return ContactSnapshot(self.n)

    def labelled_edges(self, slot: int) -> set[tuple[str, str]]:
        names = self.node_universe
        return {tuple(sorted((names[a], names[b]))) for a, b in self.slots[slot].edges}

    def write_edges_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", "node_a", "node_b"])
        names = self.node_universe
        for k, snap in enumerate(self.slots):
            for a, b in snap.edges:
                writer.writerow([k, names[a], names[b]])


def build_tvg(records: Sequence[ColocationRecord], slot_s: float = DEFAULT_SLOT_S,
              t0: float | None = None) -> TimeVaryingGraph:
    if not slot_s > 0:
        raise InvalidParams("slot_s must be > 0")
    if not records:
        raise EmptyTrace("trace holds no valid records")
    universe = sorted({r.node_id for r in records})
    index = {node: k for k, node in enumerate(universe)}
    if t0 is None:
        t0 = min(r.start_s for r in records)

    # slot -> location -> member node indices
    present: dict[int, dict[str, set[int]]] = defaultdict(lambda: defaultdict(set))
    n_slots = 0
    for rec in records:
        span = _slot_span(rec.start_s, rec.end_s, t0, slot_s)
        for k in span:
            present[k][rec.location_id].add(index[rec.node_id])
        if len(span):
            n_slots = max(n_slots, span[-1] + 1)

    slots = []
    for k in range(n_slots):
        edges = []
        for members in present.get(k, {}).values():
            if len(members) > 1:
                edges.extend(combinations(sorted(members), 2))
        slots.append(ContactSnapshot(len(universe), np.asarray(edges, dtype=np.int64).reshape(-1, 2)))
    return TimeVaryingGraph(slot_s, t0, universe, slots)


def load_colocation(source, slot_s: float = DEFAULT_SLOT_S, *, min_duration_s: float | None = None,
                    window: tuple[float, float] | None = None,
                    transform: Callable[[list[ColocationRecord]], list[ColocationRecord]] | None = None,
                    ) -> TimeVaryingGraph:
    """Read, optionally filter and transform, and slice a trace.

    ``transform`` receives the filtered records and may return a rewritten
    list, e.g. to add virtual aggregation locations for hosts that are
    absent from every location in a slot.
    """
    records = read_colocation_records(source)
    if min_duration_s is not None or window is not None:
        lo, hi = window if window is not None else (None, None)
        records = filter_short_contacts(records, min_duration_s or 0.0, lo, hi)
    if transform is not None:
        records = list(transform(records))
    t0 = window[0] if window is not None else None
    return build_tvg(records, slot_s, t0)


class SlotDegree(NamedTuple):
    slot: int
    mean_degree: float
    min_degree: int
    active: int
    isolated: int


def degree_series(tvg: TimeVaryingGraph) -> list[SlotDegree]:
    """Per-slot degree statistics over active nodes (degree >= 1)."""
    out = []
    for k, snap in enumerate(tvg.slots):
        deg = snap.degrees[snap.degrees > 0]
        if len(deg):
            out.append(SlotDegree(k, float(deg.mean()), int(deg.min()), len(deg), tvg.n - len(deg)))
        else:
            out.append(SlotDegree(k, 0.0, 0, 0, tvg.n))
    return out


class TraceContacts:
    """Contact source that replays a trace, one frozen snapshot per round."""

    def __init__(self, tvg: TimeVaryingGraph, tau_s: float, start_s: float | None = None):
        self.tvg = tvg
        self.tau_s = tau_s
        self.start_s = tvg.t0 if start_s is None else start_s
        self.n = tvg.n

    def __call__(self, round_: int) -> ContactSnapshot:
        return self.tvg.snapshot_at(self.start_s + round_ * self.tau_s)


def synthetic_colocation(n_nodes: int, n_locations: int, duration_s: float, seed: int, *,
                         mean_stay_s: float = 600.0, mean_gap_s: float = 120.0,
                         popularity_exponent: float = 0.0) -> list[ColocationRecord]:
    """Random co-location trace for desk-scale experiments.

    Each node alternates between stays at a location (exponential length,
    mean ``mean_stay_s``) and absences (mean ``mean_gap_s``). Locations are
    picked with probability proportional to ``rank ** -popularity_exponent``;
    a positive exponent concentrates nodes and yields heterogeneous degrees.
    """
    rng = np.random.default_rng(seed)
    weights = np.arange(1, n_locations + 1, dtype=float) ** -popularity_exponent
    weights /= weights.sum()
    width = len(str(n_nodes - 1))
    records = []
    for v in range(n_nodes):
        t = rng.uniform(0.0, mean_gap_s) if mean_gap_s > 0 else 0.0
        while t < duration_s:
            stay = max(1.0, rng.exponential(mean_stay_s))
            loc = int(rng.choice(n_locations, p=weights))
            end = min(t + stay, duration_s)
            start_r, end_r = round(t, 3), round(end, 3)
            if end_r > start_r:
                records.append(ColocationRecord(f"n{v:0{width}d}", f"L{loc}", start_r, end_r))
            t = end + (rng.exponential(mean_gap_s) if mean_gap_s > 0 else 0.0)
    records.sort(key=lambda r: (r.start_s, r.node_id))
    return records


def records_to_csv_text(records: Iterable[ColocationRecord]) -> str:
    buf = io.StringIO()
    write_colocation_records(records, buf)
    return buf.getvalue()
