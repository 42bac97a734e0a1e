"""Discrete-event simulator for multi-token location sharing among UAVs."""

from .config import SweepParam, SweepSpec, parse_config
from .engine import Simulator, run
from .errors import (
    ConfigError,
    DomainError,
    FanetSimError,
    InvalidScenarioError,
    ProtocolError,
    UndefinedMetricError,
    UnknownMcsError,
)
from .kernels import BACKEND
from .metrics import RunReport, aggregate
from .model import Arena, LinkModelKind, MobilityConfig, ScenarioConfig
from .phy import MCS_TABLE, mcs_lookup
from .sweep import run_sweep

__version__ = "0.1.0"

__all__ = [
    "Arena",
    "BACKEND",
    "ConfigError",
    "DomainError",
    "FanetSimError",
    "InvalidScenarioError",
    "LinkModelKind",
    "MCS_TABLE",
    "MobilityConfig",
    "ProtocolError",
    "RunReport",
    "ScenarioConfig",
    "Simulator",
    "SweepParam",
    "SweepSpec",
    "UndefinedMetricError",
    "UnknownMcsError",
    "aggregate",
    "mcs_lookup",
    "parse_config",
    "run",
    "run_sweep",
]
