"""Experiment configuration and the batch runner behind ``epcast run``."""
from __future__ import annotations

import dataclasses
import functools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, EpcastError, TraceError
from .metrics import MetricsReport, aggregate, write_results_csv
from .mobility import ArenaConfig, RandomWaypointContacts
from .simulation import ReplicationSeeds, RunSettings, calibrate_gamma, simulate
from .traces import TraceContacts, load_colocation
from .tuner import DEFAULT_GAMMA

log = logging.getLogger(__name__)

MODES = ("epcast", "epcast-het", "fixed-beta")
SCENARIOS = ("rwp", "trace")
DENSITIES = (64, 128, 256, 512)
CALIBRATE = "calibrate"
# discard the RWP initialisation transient before the first round
DEFAULT_WARMUP_S = 1000.0
PRECISION_BATCH = 10
# pilot runs per calibration step; the per-run removal rate scatters by about 10%
DEFAULT_PILOTS = 16


@dataclass
class ExperimentConfig:
    scenario: str = "rwp"
    node_count: int = 512
    arena: ArenaConfig | None = field(default_factory=ArenaConfig)
    trace_path: str | None = None
    tau_s: float = 10.0
    buffer_capacity: int = 5
    initial_messages: int = 20
    targets: list = field(default_factory=lambda: [1.0])
    deadline_s: float = 600.0
    replications: int = 30
    master_seed: int = 0
    mode: str = "epcast"
    fixed_beta: float | None = None
    name: str | None = None
    warmup_s: float = DEFAULT_WARMUP_S
    gamma_prior: float | str = DEFAULT_GAMMA
    calibration_pilots: int = DEFAULT_PILOTS
    slot_s: float = 60.0
    min_duration_s: float | None = 60.0
    window: list | None = None
    until_precise: bool = False
    max_replications: int = 100
    record_events: bool = False

    def __post_init__(self):
        if isinstance(self.arena, dict):
            self.arena = ArenaConfig(**self.arena)
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.scenario == "rwp":
            if self.arena is None or self.trace_path is not None:
                raise ConfigError("an rwp scenario needs an arena and no trace_path")
            if self.node_count < 2:
                raise ConfigError("node_count must be >= 2")
        elif self.trace_path is None or self.arena is not None:
            raise ConfigError("a trace scenario needs trace_path and no arena")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "fixed-beta":
            if self.fixed_beta is None or not 0 <= self.fixed_beta <= 1:
                raise ConfigError("fixed-beta mode needs fixed_beta in [0, 1]")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.targets or any(not 0 < t <= 1 for t in self.targets):
            raise ConfigError("targets must be a nonempty list of fractions in (0, 1]")
        if not self.tau_s > 0 or self.deadline_s < self.tau_s:
            raise ConfigError("need tau_s > 0 and deadline_s >= tau_s")
        if self.buffer_capacity < 1 or self.initial_messages < 1:
            raise ConfigError("buffer_capacity and initial_messages must be >= 1")
        if not (self.gamma_prior == CALIBRATE
                or (isinstance(self.gamma_prior, (int, float)) and self.gamma_prior >= 0)):
            raise ConfigError(f"gamma_prior must be a rate >= 0 or {CALIBRATE!r}")
        if self.calibration_pilots < 1:
            raise ConfigError("calibration_pilots must be >= 1")
        if self.window is not None and len(self.window) != 2:
            raise ConfigError("window must be [start_s, end_s]")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("scenario") == "trace" and "arena" not in data:
            data["arena"] = None
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.scenario == "rwp":
            return f"rwp-{self.node_count}"
        return f"trace-{Path(self.trace_path).stem}"

    def settings(self, target: float, gamma_prior: float) -> RunSettings:
        return RunSettings(
            tau_s=self.tau_s,
            buffer_capacity=self.buffer_capacity,
            initial_messages=self.initial_messages,
            target_fraction=target,
            deadline_s=self.deadline_s,
            gamma_prior=gamma_prior,
            tuning="heterogeneous" if self.mode == "epcast-het" else "homogeneous",
            fixed_beta=self.fixed_beta if self.mode == "fixed-beta" else None,
        )


def _preset_table() -> dict[str, dict[str, Any]]:
    table = {}
    for n in DENSITIES:
        base = dict(scenario="rwp", node_count=n, replications=30, gamma_prior=CALIBRATE, until_precise=True)
        table[f"rwp-{n}"] = dict(base, targets=[1.0, 0.5])
        for psi in (1.0, 0.5):
            table[f"rwp-{n}-psi{psi}"] = dict(base, targets=[psi], name=f"rwp-{n}")
    return table


PRESETS = _preset_table()


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig.from_dict({**PRESETS[name], **overrides})


def load_config(path: str | os.PathLike | None = None, preset_name: str | None = None,
                overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Preset, then config file, then explicit overrides; later sources win."""
    if preset_name and preset_name not in PRESETS:
        raise ConfigError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
    data: dict[str, Any] = dict(PRESETS[preset_name]) if preset_name else {}
    if path is not None:
        try:
            with open(path) as fh:
                file_data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update(file_data)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(data)


@functools.lru_cache(maxsize=4)
def _load_trace(path: str, slot_s: float, min_duration_s: float | None, window: tuple | None):
    try:
        return load_colocation(path, slot_s, min_duration_s=min_duration_s, window=window)
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc}") from exc
    except EpcastError as exc:
        raise TraceError(f"{path}: {exc}") from exc


class ScenarioFactory:
    """Picklable maker of fresh contact sources for one configuration."""

    def __init__(self, config: ExperimentConfig):
        self.config = config

    def tvg(self):
        c = self.config
        window = tuple(c.window) if c.window is not None else None
        return _load_trace(str(c.trace_path), c.slot_s, c.min_duration_s, window)

    @property
    def n(self) -> int:
        return self.config.node_count if self.config.scenario == "rwp" else self.tvg().n

    def __call__(self, mobility_seed: int):
        c = self.config
        if c.scenario == "rwp":
            return RandomWaypointContacts(c.arena, c.node_count, mobility_seed, c.tau_s, c.warmup_s)
        start = c.window[0] if c.window is not None else None
        return TraceContacts(self.tvg(), c.tau_s, start)


def _run_one(job) -> MetricsReport:
    factory, settings, master_seed, target_index, rep, scenario = job
    seeds = ReplicationSeeds.derive(master_seed, rep)
    _, report = simulate(factory(seeds.mobility), settings, seeds, scenario=scenario, replication=rep)
    report.extra["target_index"] = target_index
    return report


def _run_batch(jobs, parallel: int) -> list[MetricsReport]:
    if parallel <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_run_one, jobs))


@dataclass
class ScenarioResult:
    scenario: str
    target: float
    gamma_prior: float
    reports: list[MetricsReport]

    def summary(self) -> dict[str, Any]:
        out = {
            "scenario": self.scenario,
            "type": self.reports[0].kind,
            "target_fraction": self.target,
            "gamma_prior": self.gamma_prior,
            "replications": len(self.reports),
        }
        if len(self.reports) >= 2:
            out["metrics"] = {k: dataclasses.asdict(v) for k, v in aggregate(self.reports).items()}
        else:
            out["metrics"] = {k: {"mean": v} for k, v in self.reports[0].values().items()}
        return out


def run_experiment(config: ExperimentConfig, parallel: int = 1) -> list[ScenarioResult]:
    """Run every target of ``config``; nothing is written to disk."""
    factory = ScenarioFactory(config)
    results = []
    for ti, target in enumerate(config.targets):
        scenario = f"{config.label}-psi{target:g}"
        gamma = config.gamma_prior
        settings = config.settings(target, DEFAULT_GAMMA if gamma == CALIBRATE else float(gamma))
        if gamma == CALIBRATE:
            gamma = 0.0 if config.mode == "fixed-beta" else calibrate_gamma(
                factory, settings, config.master_seed, pilots=config.calibration_pilots)
            settings = dataclasses.replace(settings, gamma_prior=gamma)
            log.info("%s: calibrated removal prior %.5f", scenario, gamma)

        def jobs(reps):
            return [(factory, settings, config.master_seed, ti, r, scenario) for r in reps]

        reports = _run_batch(jobs(range(config.replications)), parallel)
        while config.until_precise and len(reports) < config.max_replications and _imprecise(reports):
            more = range(len(reports), min(len(reports) + PRECISION_BATCH, config.max_replications))
            reports += _run_batch(jobs(more), parallel)
        log.info("%s: %d replications, delivered %.3f", scenario, len(reports),
                 sum(r.delivered_fraction for r in reports) / len(reports))
        results.append(ScenarioResult(scenario, target, float(gamma), reports))
    return results


def _imprecise(reports: list[MetricsReport]) -> bool:
    if len(reports) < 2:
        return True
    summary = aggregate(reports)
    return summary["delivered_fraction"].flagged or summary["replicas_per_host_per_message"].flagged


def write_outputs(config: ExperimentConfig, results: list[ScenarioResult], out_dir: str | os.PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        write_results_csv([r for res in results for r in res.reports], fh)
    doc = {"config": config.to_dict(), "scenarios": [res.summary() for res in results]}
    with open(out / "aggregate.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return out


def _json_default(obj):
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def run(config: ExperimentConfig, out_dir: str | os.PathLike, parallel: int = 1) -> list[ScenarioResult]:
    results = run_experiment(config, parallel)
    write_outputs(config, results, out_dir)
    if config.record_events:
        _write_event_logs(config, results, Path(out_dir))
    return results


def _write_event_logs(config: ExperimentConfig, results: list[ScenarioResult], out: Path) -> None:
    # event logs are re-derived by replaying each replication; runs are deterministic
    factory = ScenarioFactory(config)
    events_dir = out / "events"
    events_dir.mkdir(exist_ok=True)
    for res in results:
        settings = dataclasses.replace(config.settings(res.target, res.gamma_prior), record_events=True)
        for rep in res.reports:
            seeds = ReplicationSeeds.derive(config.master_seed, rep.replication)
            world, _ = simulate(factory(seeds.mobility), settings, seeds)
            with open(events_dir / f"{res.scenario}-rep{rep.replication:03d}.jsonl", "w") as fh:
                world.event_log.write_jsonl(fh)
