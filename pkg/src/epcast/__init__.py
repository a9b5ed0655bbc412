"""Epidemic dissemination with per-message infectivity tuned to a delivery target."""
from .epidemic_models import EpidemicParams, ModelKind, Trajectory, reached_fraction, solve
from .errors import EpcastError
from .harness import ExperimentConfig, load_config, preset, run, run_experiment
from .mobility import ArenaConfig, ContactSnapshot, RandomWaypointContacts
from .protocol import World, epcast, run_round
from .simulation import ReplicationSeeds, RunSettings, StaticContacts, simulate
from .traces import TimeVaryingGraph, build_tvg, load_colocation
from .tuner import TuneRequest, TuneResult, tune_lambda, tune_lambda_heterogeneous

__version__ = "0.1.0"

__all__ = [
    "ArenaConfig", "ContactSnapshot", "EpcastError", "EpidemicParams", "ExperimentConfig", "ModelKind",
    "RandomWaypointContacts", "ReplicationSeeds", "RunSettings", "StaticContacts", "TimeVaryingGraph",
    "Trajectory", "TuneRequest", "TuneResult", "World", "build_tvg", "epcast", "load_colocation",
    "load_config", "preset", "reached_fraction", "run", "run_experiment", "run_round", "simulate",
    "solve", "tune_lambda", "tune_lambda_heterogeneous",
]
