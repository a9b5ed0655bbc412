import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epcast.errors import EmptyTrace, InvalidParams, ParseError
from epcast.traces import (ColocationRecord as Rec, TraceContacts, build_tvg, degree_series,
                           filter_short_contacts, load_colocation, read_colocation_records,
                           records_to_csv_text, synthetic_colocation)
from oracles import overlap_edges

HEADER = "node_id,location_id,start_s,end_s\n"


def text(body):
    return io.StringIO(HEADER + body)


def test_header_only_is_empty():
    with pytest.raises(EmptyTrace):
        load_colocation(text(""))


@pytest.mark.parametrize("body,line", [
    ("a,L1,0,10\nb,L1,zero,10\n", 3),
    ("a,L1,0,10,extra\n", 2),
    ("a,L1,10,5\n", 2),
    ("a,,0,5\n", 2),
    ("a,L1,0,nan\n", 2),
])
def test_parse_errors_carry_line(body, line):
    with pytest.raises(ParseError) as info:
        read_colocation_records(text(body))
    assert info.value.line == line


def test_bad_header():
    with pytest.raises(ParseError) as info:
        read_colocation_records(io.StringIO("node,loc,a,b\n"))
    assert info.value.line == 1


def test_overlap_lands_in_one_slot():
    tvg = load_colocation(text("a,L1,0,120\nb,L1,60,180\n"), 60)
    assert len(tvg) == 3
    assert [tvg.labelled_edges(k) for k in range(3)] == [set(), {("a", "b")}, set()]


HAND_BUILT = [
    Rec("a", "L1", 0, 95), Rec("b", "L1", 30, 200), Rec("c", "L2", 10, 70),
    Rec("d", "L2", 65, 130), Rec("e", "L3", 0, 240),
]


def test_hand_built_matches_overlap_oracle():
    tvg = build_tvg(HAND_BUILT, 60, t0=0)
    assert tvg.node_universe == list("abcde")
    for k in range(len(tvg)):
        assert tvg.labelled_edges(k) == overlap_edges(HAND_BUILT, k, 60, 0)
    assert tvg.labelled_edges(1) == {("a", "b"), ("c", "d")}


def test_filter_rules():
    recs = [Rec("a", "L", 0, 59), Rec("b", "L", 0, 60), Rec("c", "L", 100, 300)]
    assert [r.node_id for r in filter_short_contacts(recs, 60)] == ["b", "c"]
    clipped = filter_short_contacts(recs, 60, window_start_s=200, window_end_s=1000)
    assert clipped == [Rec("c", "L", 200, 300)]
    assert filter_short_contacts(recs, 60, window_start_s=250) == []
    with pytest.raises(InvalidParams):
        filter_short_contacts(recs, -1)


def test_degree_series_examples():
    recs = [Rec(n, "L", 0, 60) for n in "abcd"] + [Rec(n, "X%s" % n, 200, 260) for n in "efghij"]
    series = degree_series(build_tvg(recs, 60, t0=0))
    assert series[0] == (0, 3.0, 3, 4, 6)
    assert series[1] == (1, 0.0, 0, 0, 10)


def test_snapshot_outside_trace_is_empty():
    tvg = build_tvg(HAND_BUILT, 60, t0=0)
    assert tvg.snapshot_at(-5).edge_count == 0
    assert tvg.snapshot_at(10_000).edge_count == 0
    src = TraceContacts(tvg, tau_s=10)
    assert src(7).edge_set() == tvg.slots[1].edge_set()


def test_edges_csv_and_round_trip():
    recs = synthetic_colocation(12, 3, 900, seed=4)
    tvg = load_colocation(io.StringIO(records_to_csv_text(recs)), 60)
    assert tvg.n == len({r.node_id for r in recs})
    buf = io.StringIO()
    tvg.write_edges_csv(buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "slot,node_a,node_b"
    assert len(rows) - 1 == sum(s.edge_count for s in tvg.slots)


record_lists = st.lists(
    st.builds(lambda n, loc, start, length: Rec(f"n{n}", f"L{loc}", start, start + length),
              st.integers(0, 6), st.integers(0, 2), st.floats(0, 400).map(lambda x: round(x, 1)),
              st.floats(0.5, 300).map(lambda x: round(x, 1))),
    min_size=1, max_size=20,
)


@settings(max_examples=150, deadline=None)
@given(record_lists, st.sampled_from([15.0, 60.0, 97.0]))
def test_oracle_equivalence_and_cliques(recs, slot_s):
    tvg = build_tvg(recs, slot_s, t0=0)
    for k in range(len(tvg)):
        assert tvg.labelled_edges(k) == overlap_edges(recs, k, slot_s, 0)
        lo, hi = k * slot_s, (k + 1) * slot_s
        by_loc = {}
        for r in recs:
            if min(r.end_s, hi) > max(r.start_s, lo):
                by_loc.setdefault(r.location_id, set()).add(r.node_id)
        assert tvg.slots[k].edge_count <= sum(len(m) * (len(m) - 1) // 2 for m in by_loc.values())
        if len(by_loc) == 1 or all(not (a & b) for a in by_loc.values() for b in by_loc.values() if a is not b):
            assert tvg.slots[k].edge_count == sum(len(m) * (len(m) - 1) // 2 for m in by_loc.values())


@settings(max_examples=100, deadline=None)
@given(record_lists, st.floats(0, 120), st.one_of(st.none(), st.tuples(st.floats(0, 200), st.floats(201, 800))))
def test_filter_idempotent(recs, min_dur, window):
    lo, hi = window if window else (None, None)
    once = filter_short_contacts(recs, min_dur, lo, hi)
    assert filter_short_contacts(once, min_dur, lo, hi) == once
    assert all(r.duration_s >= min_dur for r in once)


def test_synthetic_generator_is_seeded():
    a = synthetic_colocation(20, 4, 1800, seed=9, popularity_exponent=1.0)
    assert a == synthetic_colocation(20, 4, 1800, seed=9, popularity_exponent=1.0)
    assert a != synthetic_colocation(20, 4, 1800, seed=10, popularity_exponent=1.0)
    assert all(0 <= r.start_s < r.end_s <= 1800 for r in a)
