"""oflexlab: deterministic simulator and test harness for flexible BFT
consensus with client-chosen confirmation quorums."""

from .core import (
    GENESIS,
    GENESIS_ID,
    Block,
    ClientPolicy,
    are_consistent,
    chain_to_log,
    feasible_quorum_range,
    is_descendant,
    is_prefix,
    make_block,
    notarization_quorum,
    pairwise_consistency_threshold,
)
from .netsim import ConfigError, DelayError, ForgeryError, ScenarioConfig, Simulation, Trace
from .harness import AuditReport, audit, latency_stats, run_scenario, sweep

__version__ = "0.1.0"

__all__ = [
    "GENESIS",
    "GENESIS_ID",
    "Block",
    "ClientPolicy",
    "ScenarioConfig",
    "Simulation",
    "Trace",
    "ConfigError",
    "DelayError",
    "ForgeryError",
    "AuditReport",
    "are_consistent",
    "audit",
    "chain_to_log",
    "feasible_quorum_range",
    "is_descendant",
    "is_prefix",
    "latency_stats",
    "make_block",
    "notarization_quorum",
    "pairwise_consistency_threshold",
    "run_scenario",
    "sweep",
]
