import dataclasses

import pytest

from epcast.baselines import BaselineConfig, BaselineMode, baseline_settings, run_fixed_beta
from epcast.errors import InvalidParams
from epcast.mobility import ContactSnapshot
from epcast.simulation import ReplicationSeeds, RunSettings, StaticContacts, simulate
from scenarios import desk_trace, desk_trace_contacts

SETTINGS = RunSettings(initial_messages=4, deadline_s=300, record_events=True)


TVG = desk_trace()


def trace_source():
    return desk_trace_contacts(TVG)


def test_fixed_zero_stays_at_origin():
    rep = run_fixed_beta(StaticContacts(ContactSnapshot.complete(30)), SETTINGS, BaselineConfig(0.0), 3)
    assert all(m.delivered_fraction == pytest.approx(1 / 30) for m in rep.messages)
    assert rep.kind == "epidemic"


def test_config_validation():
    with pytest.raises(InvalidParams):
        BaselineConfig(1.5)
    assert BaselineConfig(0.5, "sis").mode is BaselineMode.SIS
    s = baseline_settings(SETTINGS, BaselineConfig(0.25, BaselineMode.SIS))
    assert s.fixed_beta == 0.25 and s.sis and s.deadline_s == SETTINGS.deadline_s


def test_same_constant_gives_identical_log():
    # one message, so the tuned run has a single lambda to pin the baseline to
    settings = dataclasses.replace(SETTINGS, initial_messages=1)
    seeds = ReplicationSeeds.derive(7, 0)
    tuned, _ = simulate(trace_source(), settings, seeds)
    lam = tuned.messages[0].infectivity
    fixed, _ = simulate(trace_source(), baseline_settings(settings, BaselineConfig(lam)), seeds)
    assert fixed.event_log.events == tuned.event_log.events


def test_unit_infectivity_sends_more_than_tuned():
    settings = RunSettings()
    for rep in range(3):
        seeds = ReplicationSeeds.derive(11, rep)
        _, tuned = simulate(trace_source(), settings, seeds)
        flood = run_fixed_beta(trace_source(), settings, BaselineConfig(1.0), seeds)
        assert flood.total_broadcasts > tuned.total_broadcasts
