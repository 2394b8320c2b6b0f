"""Scenario execution, auditors, metrics, and the sweep campaign.

The auditor turns the two guarantees into pass/fail checks over traces:
safety (all confirmed logs pairwise consistent, across clients and across
time) and liveness (a transaction injected to all honest replicas reaches
every client whose liveness resilience covers the adversary count).  Each
violation is classified as within-resilience (a test failure) or
above-resilience (expected for attack fixtures).
"""
from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import forensics as forensics_mod
from .adversary import Strategy, build_strategy, random_byzantine, split_brain
from .core import ClientPolicy, are_consistent, notarization_quorum
from .gadget import (
    GadgetClientMachine,
    GadgetReplicaMachine,
    scriptable_base,
    streamlet_base,
)
from .netsim import ConfigError, ScenarioConfig, Simulation, Trace
from .oflex_streamlet import make_oflex_core
from .streamlet import (
    PassiveMachine,
    ReplicaMachine,
    StreamletClientMachine,
    StreamletCore,
)

PROTOCOLS = ("streamlet", "fbft-streamlet", "oflex-streamlet", "gadget")
CLIENT_RULES = {"streamlet": "streamlet", "fbft-streamlet": "fbft", "oflex-streamlet": "oflex"}


def leader_schedule_fn(config: ScenarioConfig) -> Callable[[int], int]:
    """Leader of each epoch: round-robin, seeded-random, or an explicit list
    (1-indexed by epoch; round-robin past the end of a list)."""
    n = config.n
    if config.leaders == "round-robin" or config.leaders is None:
        return lambda e: (e - 1) % n
    if config.leaders == "random":
        rng = random.Random(f"leaders:{config.seed}")
        epochs = config.horizon // (2 * config.delta) + 2
        schedule = [rng.randrange(n) for _ in range(epochs + 1)]
        return lambda e: schedule[e - 1] if e - 1 < len(schedule) else (e - 1) % n
    schedule = list(config.leaders)
    return lambda e: schedule[e - 1] if e - 1 < len(schedule) else (e - 1) % n


def _meta_record(config: ScenarioConfig, strategy: Strategy) -> dict:
    return {
        "tick": -1,
        "kind": "meta",
        "n": config.n,
        "f": len(strategy.controlled),
        "adversary_replicas": sorted(strategy.controlled),
        "adversary": strategy.name,
        "protocol": config.protocol,
        "quorum": notarization_quorum(config.n),
        "delta": config.delta,
        "gst": config.gst,
        "horizon": config.horizon,
        "seed": config.seed,
        "injections": [[t, tx] for t, tx in config.injections],
        "clients": [
            {
                "client": p.client,
                "quorum": p.quorum,
                "tau_live": p.tau_live,
                "tau_safe": p.tau_safe,
            }
            for p in config.clients
        ],
    }


def run_scenario(config: ScenarioConfig) -> Trace:
    """Execute one scenario deterministically and return its trace."""
    if config.protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol: {config.protocol}")
    strategy = build_strategy(config.adversary)
    if any(not (0 <= rid < config.n) for rid in strategy.controlled):
        raise ConfigError("controlled replica ids out of range")
    for policy in config.clients:
        policy.check(config.n)
    leader_fn = leader_schedule_fn(config)
    trace = Trace()
    trace.add(_meta_record(config, strategy))
    emit = trace.add

    honest_cores: dict = {}
    machines: dict = {}
    if config.protocol == "gadget":
        if config.base is None:
            factory = streamlet_base()
        elif isinstance(config.base, dict):
            factory = scriptable_base(config.base["script"])
        else:
            factory = config.base
        for rid in range(config.n):
            if rid in strategy.controlled and strategy.machine_mode == "passive":
                machines[rid] = PassiveMachine(rid)
                continue
            base = factory(rid, config.n, config.delta, leader_fn)
            honest_cores[rid] = base
            machines[rid] = GadgetReplicaMachine(rid, base, emit)
        for policy in config.clients:
            machines[policy.client] = GadgetClientMachine(
                policy.client, policy, config.n, emit
            )
    else:
        lock_rule = config.protocol == "oflex-streamlet"
        for rid in range(config.n):
            if rid in strategy.controlled and strategy.machine_mode == "passive":
                machines[rid] = PassiveMachine(rid)
                continue
            if lock_rule:
                core = make_oflex_core(rid, config.n, config.delta, leader_fn)
            else:
                core = StreamletCore(rid, config.n, config.delta, leader_fn, lock_rule=False)
            honest_cores[rid] = core
            machines[rid] = ReplicaMachine(rid, core, emit)
        rule = CLIENT_RULES[config.protocol]
        for policy in config.clients:
            machines[policy.client] = StreamletClientMachine(
                policy.client, policy, config.n, rule, emit
            )

    pending = sorted(config.injections, key=lambda it: it[0])

    def pre_tick(tick: int) -> None:
        while pending and pending[0][0] <= tick:
            _t, tx = pending.pop(0)
            for core in honest_cores.values():
                core.input_tx(tx)

    sim = Simulation(
        n=config.n,
        delta=config.delta,
        gst=config.gst,
        horizon=config.horizon,
        strategy=strategy,
        machines=machines,
        trace=trace,
        leader_fn=leader_fn,
        record_network=config.record_network,
        pre_tick=pre_tick,
    )
    return sim.run()


# -- auditing ------------------------------------------------------------


@dataclass
class AuditReport:
    safety_violations: list = field(default_factory=list)
    liveness_misses: list = field(default_factory=list)
    forensics: list = field(default_factory=list)
    latency: dict = field(default_factory=dict)

    @property
    def within_resilience_failures(self) -> list:
        return [v for v in self.safety_violations if v["within_resilience"]] + [
            m for m in self.liveness_misses if m["within_resilience"]
        ]

    def exit_code(self) -> int:
        if self.within_resilience_failures:
            return 1
        if self.safety_violations or self.liveness_misses:
            return 3
        return 0

    def to_json(self) -> dict:
        return {
            "safety_violations": self.safety_violations,
            "liveness_misses": self.liveness_misses,
            "forensics": self.forensics,
            "latency": self.latency,
        }


def _policies_from_meta(meta: dict) -> list:
    return [
        ClientPolicy(
            client=c["client"],
            tau_live=c["tau_live"],
            tau_safe=c["tau_safe"],
            quorum=c["quorum"],
        )
        for c in meta.get("clients", [])
    ]


def _within_threshold(protocol: str, qa: int, qb: int, q: int, n: int) -> int:
    if protocol == "fbft-streamlet":
        return min(qa, qb) + q - n - 1
    return qa + qb - n - 1


def audit(
    trace: Trace, policies: Optional[list] = None, *, grace_epochs: int = 12
) -> AuditReport:
    """Check all confirmation events for pairwise consistency and every
    fully injected transaction for inclusion, attach forensics on
    violations, and compute per-client confirmation latencies."""
    meta = trace.meta
    if not meta:
        raise ConfigError("trace has no meta record")
    if policies is None:
        policies = _policies_from_meta(meta)
    by_client = {p.client: p for p in policies}
    n, f, q = meta["n"], meta["f"], meta["quorum"]
    protocol = meta["protocol"]
    report = AuditReport()

    confirms = [r for r in trace.events("confirm") if r["actor"] in by_client]
    for i, a in enumerate(confirms):
        for b in confirms[i + 1 :]:
            if are_consistent(a["log"], b["log"]):
                continue
            qa = by_client[a["actor"]].quorum
            qb = by_client[b["actor"]].quorum
            threshold = _within_threshold(protocol, qa, qb, q, n)
            report.safety_violations.append(
                {
                    "client": a["actor"],
                    "client2": b["actor"],
                    "tick": a["tick"],
                    "tick2": b["tick"],
                    "log": a["log"],
                    "log2": b["log"],
                    "within_resilience": f <= threshold,
                }
            )

    final_log: dict = {}
    for rec in confirms:
        final_log[rec["actor"]] = tuple(rec["log"])
    grace = grace_epochs * 2 * meta["delta"]
    for tick, tx in meta.get("injections", []):
        if meta["horizon"] - max(meta["gst"], tick) < grace:
            continue  # horizon too short to decide an eventual property
        for policy in policies:
            if tx not in final_log.get(policy.client, ()):
                report.liveness_misses.append(
                    {
                        "client": policy.client,
                        "tx": tx,
                        "injected_at": tick,
                        "within_resilience": f <= policy.tau_live,
                    }
                )

    if report.safety_violations and protocol in ("oflex-streamlet", "gadget"):
        report.forensics = forensics_mod.blame_report(trace)

    report.latency = latency_stats(trace, policies)
    return report


def latency_stats(trace: Trace, policies: Optional[list] = None) -> dict:
    """Per-client epochs from transaction injection to first confirmation."""
    meta = trace.meta
    if policies is None:
        policies = _policies_from_meta(meta)
    epoch_ticks = 2 * meta["delta"]
    first_confirm: dict = {}  # (client, tx) -> tick
    for rec in trace.events("confirm"):
        for tx in rec["log"]:
            key = (rec["actor"], tx)
            if key not in first_confirm:
                first_confirm[key] = rec["tick"]
    out: dict = {}
    for policy in policies:
        samples = []
        for tick, tx in meta.get("injections", []):
            key = (policy.client, tx)
            if key in first_confirm:
                samples.append((first_confirm[key] - tick) / epoch_ticks)
        entry: dict = {"samples": samples}
        if samples:
            entry["mean"] = statistics.fmean(samples)
            entry["max"] = max(samples)
        out[policy.client] = entry
    return out


# -- liveness-latency helper ----------------------------------------------


def honest_window_wait(leader_of: Callable[[int], int], silent: set, width: int = 6) -> int:
    """Number of disjoint `width`-epoch windows inspected until (and
    including) the first whose leaders are all outside `silent`."""
    window = 1
    while True:
        start = (window - 1) * width + 1
        if all(leader_of(e) not in silent for e in range(start, start + width)):
            return window
        window += 1


# -- sweep ---------------------------------------------------------------


def default_clients(n: int, quorums) -> list:
    return [ClientPolicy.from_quorum(f"client_q{q}", n, q) for q in quorums]


def crash_scenario(n: int, f: int, quorums, *, horizon_epochs: int = 16, delta: int = 2,
                   seed: int = 0, protocol: str = "oflex-streamlet",
                   revive_at: Optional[int] = None) -> ScenarioConfig:
    return ScenarioConfig(
        n=n,
        delta=delta,
        gst=0,
        horizon=horizon_epochs * 2 * delta,
        seed=seed,
        protocol=protocol,
        clients=default_clients(n, quorums),
        adversary={"name": "crash", "replicas": list(range(n - f, n)), "at_tick": 0,
                   "revive_at": revive_at},
        injections=[(0, "tx1")],
    )


def fuzz_scenario(n: int, f: int, quorums, seed: int, *, protocol: str = "oflex-streamlet",
                  horizon_epochs: int = 6, delta: int = 2,
                  record_network: bool = False) -> ScenarioConfig:
    return ScenarioConfig(
        n=n,
        delta=delta,
        gst=0,
        horizon=horizon_epochs * 2 * delta,
        seed=seed,
        protocol=protocol,
        clients=default_clients(n, quorums),
        adversary={"name": "random_byzantine", "replicas": list(range(f)), "seed": seed},
        injections=[(0, "tx1")],
        record_network=record_network,
    )


def sweep(n: int, protocol: str = "oflex-streamlet", *, fuzz_seeds: int = 25) -> list:
    """Safety/liveness frontier table: for each feasible client quorum q,
    the claimed bounds (max safe f = 2q-n-1, max live f = n-q) with
    witnesses — a scripted minimal attack succeeding at f = 2q-n, a crash
    stall at f = n-q+1, liveness at f = n-q, and clean fuzz at f = 2q-n-1."""
    rows = []
    for quorum in range(notarization_quorum(n), n + 1):
        max_safe = 2 * quorum - n - 1
        max_live = n - quorum
        _strategy, config = split_brain(n, max_live, max_live, protocol=protocol)
        attack_report = audit(run_scenario(config))
        attack_violates = bool(attack_report.safety_violations)

        stall_report = audit(run_scenario(crash_scenario(n, max_live + 1, [quorum])))
        stalls = any(
            m["tx"] == "tx1" for m in stall_report.liveness_misses
        )

        live_report = audit(run_scenario(crash_scenario(n, max_live, [quorum])))
        lives = not live_report.liveness_misses

        fuzz_clean = True
        for seed in range(fuzz_seeds):
            rep = audit(
                run_scenario(fuzz_scenario(n, max_safe, [quorum, quorum], seed, protocol=protocol)),
                grace_epochs=10**9,  # fuzz checks safety only
            )
            if rep.safety_violations:
                fuzz_clean = False
                break
        rows.append(
            {
                "q": quorum,
                "max_safe_f": max_safe,
                "max_live_f": max_live,
                "attack_at_boundary_violates": attack_violates,
                "crash_above_bound_stalls": stalls,
                "crash_at_bound_lives": lives,
                "fuzz_below_boundary_clean": fuzz_clean,
            }
        )
    return rows
