"""Untuned epidemic dissemination: every message carries the same fixed infectivity."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import InvalidParams
from .metrics import MetricsReport
from .simulation import ContactSource, ReplicationSeeds, RunSettings, simulate


class BaselineMode(str, enum.Enum):
    SIR = "sir"  # seen-set kept: a host never re-stores a message it dropped
    SIS = "sis"  # no seen-set rejection: hosts can be reinfected


@dataclass(frozen=True)
class BaselineConfig:
    fixed_beta: float
    mode: BaselineMode = BaselineMode.SIR

    def __post_init__(self):
        if not 0.0 <= self.fixed_beta <= 1.0:
            raise InvalidParams(f"fixed_beta must lie in [0, 1], got {self.fixed_beta!r}")
        object.__setattr__(self, "mode", BaselineMode(self.mode))


def baseline_settings(settings: RunSettings, baseline: BaselineConfig) -> RunSettings:
    """Same scenario, tuner bypassed, infectivity pinned to ``fixed_beta``.

    Messages keep the scenario's deadline so both arms expire together.
    """
    return replace(settings, fixed_beta=baseline.fixed_beta, sis=baseline.mode is BaselineMode.SIS)


def run_fixed_beta(contacts: ContactSource, settings: RunSettings, baseline: BaselineConfig,
                   seeds: ReplicationSeeds | int, *, scenario: str = "", replication: int = 0) -> MetricsReport:
    _, report = simulate(contacts, baseline_settings(settings, baseline), seeds,
                         scenario=scenario, replication=replication)
    return report
