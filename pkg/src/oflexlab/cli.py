"""Command-line interface.

Subcommands: run, attack, audit, forensics, sweep, plot-data.

Exit status contract: 0 = clean, 1 = within-resilience violation (test
failure), 2 = configuration error, 3 = above-resilience violation
(informational — expected for attack fixtures).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent
    import tomli as tomllib

from .adversary import fbft_bypass, gadget_split, split_brain
from .core import ClientPolicy
from .forensics import blame_report
from .harness import AuditReport, audit, run_scenario, sweep
from .netsim import ConfigError, ScenarioConfig, Trace


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    sc = data.get("scenario", {})
    try:
        n = sc["n"]
        horizon = sc["horizon"]
    except KeyError as exc:
        raise ConfigError(f"scenario file missing required key: {exc}") from exc
    clients = []
    for c in data.get("clients", []):
        if "tau_live" in c and "tau_safe" in c:
            clients.append(
                ClientPolicy(c["name"], c["tau_live"], c["tau_safe"], c["quorum"])
            )
        else:
            clients.append(ClientPolicy.from_quorum(c["name"], n, c["quorum"]))
    injections = [(i["tick"], i["tx"]) for i in data.get("injections", [])]
    base = None
    if "base" in data and "script" in data["base"]:
        script = {
            int(rid): [(t, tuple(log)) for t, log in entries]
            for rid, entries in data["base"]["script"].items()
        }
        base = {"script": script}
    return ScenarioConfig(
        n=n,
        horizon=horizon,
        delta=sc.get("delta", 4),
        gst=sc.get("gst", 0),
        seed=sc.get("seed", 0),
        protocol=sc.get("protocol", "oflex-streamlet"),
        leaders=sc.get("leaders", "round-robin"),
        clients=clients,
        adversary=data.get("adversary"),
        injections=injections,
        base=base,
    )


def _seed_from(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("OFLEXLAB_SEED")
    return int(env) if env is not None else None


def _print_report(report: AuditReport) -> None:
    print(f"safety violations: {len(report.safety_violations)}")
    for v in report.safety_violations:
        cls = "WITHIN-RESILIENCE" if v["within_resilience"] else "above-resilience"
        print(
            f"  [{cls}] {v['client']}@{v['tick']} vs {v['client2']}@{v['tick2']}: "
            f"{v['log']} | {v['log2']}"
        )
    print(f"liveness misses: {len(report.liveness_misses)}")
    for m in report.liveness_misses:
        cls = "WITHIN-RESILIENCE" if m["within_resilience"] else "above-resilience"
        print(f"  [{cls}] {m['client']} missing {m['tx']} (injected @{m['injected_at']})")
    for rec in report.forensics:
        print(f"  blame: replica {rec['replica']} ({rec['rule']}) evidence={rec['evidence']}")


def _finish(trace: Trace, report: AuditReport, args) -> int:
    if getattr(args, "out_trace", None):
        trace.save(args.out_trace)
    if getattr(args, "out_report", None):
        with open(args.out_report, "w") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    _print_report(report)
    return report.exit_code()


def cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    seed = _seed_from(args)
    if seed is not None:
        config.seed = seed
    if args.protocol:
        config.protocol = args.protocol
    if args.horizon is not None:
        config.horizon = args.horizon
    trace = run_scenario(config)
    return _finish(trace, audit(trace), args)


def cmd_attack(args) -> int:
    if args.name == "fbft-bypass":
        _s, config = fbft_bypass(
            args.n if args.n is not None else 6, args.q, args.q_k,
            protocol=args.protocol or "fbft-streamlet",
            reduce_f=args.reduce_f,
        )
    elif args.name == "split-brain":
        _s, config = split_brain(
            args.n if args.n is not None else 6,
            args.tau_live_k, args.tau_live_k2,
            protocol=args.protocol or "oflex-streamlet",
            reduce_f=args.reduce_f,
        )
    elif args.name == "gadget-split":
        _s, config = gadget_split(args.n if args.n is not None else 4)
    else:
        raise ConfigError(f"unknown attack fixture: {args.name}")
    seed = _seed_from(args)
    if seed is not None:
        config.seed = seed
    trace = run_scenario(config)
    return _finish(trace, audit(trace), args)


def cmd_audit(args) -> int:
    trace = Trace.load(args.trace)
    report = audit(trace, grace_epochs=args.grace_epochs)
    return _finish(trace, report, args)


def cmd_forensics(args) -> int:
    trace = Trace.load(args.trace)
    records = blame_report(trace)
    lines = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in records)
    if args.out_report:
        with open(args.out_report, "w") as fh:
            fh.write(lines)
    sys.stdout.write(lines)
    return 0


def cmd_sweep(args) -> int:
    rows = sweep(args.n, args.protocol or "oflex-streamlet", fuzz_seeds=args.fuzz_seeds)
    fields = list(rows[0].keys())
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
    for row in rows:
        print(" ".join(f"{k}={row[k]}" for k in fields))
    ok = all(
        row["attack_at_boundary_violates"]
        and row["crash_above_bound_stalls"]
        and row["crash_at_bound_lives"]
        and row["fuzz_below_boundary_clean"]
        for row in rows
    )
    return 0 if ok else 1


def cmd_plot_data(args) -> int:
    if args.kind == "tradeoff":
        rows = sweep(args.n, args.protocol or "oflex-streamlet", fuzz_seeds=args.fuzz_seeds)
        fields = ["q", "max_safe_f", "max_live_f"]
    else:  # latency
        from .harness import crash_scenario, latency_stats
        from .core import notarization_quorum

        quorums = list(range(notarization_quorum(args.n), args.n + 1))
        config = crash_scenario(args.n, 0, quorums, protocol=args.protocol or "oflex-streamlet")
        trace = run_scenario(config)
        stats = latency_stats(trace)
        rows = [
            {"q": q, "mean_latency_epochs": stats[f"client_q{q}"].get("mean", "")}
            for q in quorums
        ]
        fields = ["q", "mean_latency_epochs"]
    out = args.out or "-"
    target = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        writer = csv.DictWriter(target, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if target is not sys.stdout:
            target.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oflexlab",
        description="Deterministic simulator and auditors for flexible BFT consensus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_outs=True):
        p.add_argument("--seed", type=int, default=None, help="fallback: OFLEXLAB_SEED env var")
        if with_outs:
            p.add_argument("--out-trace", default=None)
            p.add_argument("--out-report", default=None)

    p_run = sub.add_parser("run", help="execute a scenario file, emit trace + report")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--protocol", default=None)
    p_run.add_argument("--horizon", type=int, default=None)
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_attack = sub.add_parser("attack", help="instantiate a named adversary fixture")
    p_attack.add_argument("name", choices=["fbft-bypass", "split-brain", "gadget-split"])
    p_attack.add_argument("--protocol", default=None)
    p_attack.add_argument("--n", type=int, default=None)
    p_attack.add_argument("--q", type=int, default=5)
    p_attack.add_argument("--q-k", type=int, default=6)
    p_attack.add_argument("--tau-live-k", type=int, default=0)
    p_attack.add_argument("--tau-live-k2", type=int, default=0)
    p_attack.add_argument("--reduce-f", type=int, default=0)
    common(p_attack)
    p_attack.set_defaults(func=cmd_attack)

    p_audit = sub.add_parser("audit", help="re-audit a stored trace")
    p_audit.add_argument("--trace", required=True)
    p_audit.add_argument("--grace-epochs", type=int, default=12)
    p_audit.add_argument("--out-report", default=None)
    p_audit.set_defaults(func=cmd_audit)

    p_for = sub.add_parser("forensics", help="blame report from a stored trace")
    p_for.add_argument("--trace", required=True)
    p_for.add_argument("--out-report", default=None)
    p_for.set_defaults(func=cmd_forensics)

    p_sweep = sub.add_parser("sweep", help="safety/liveness frontier over client quorums")
    p_sweep.add_argument("--n", type=int, required=True)
    p_sweep.add_argument("--protocol", default=None)
    p_sweep.add_argument("--fuzz-seeds", type=int, default=25)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_plot = sub.add_parser("plot-data", help="CSV data for tradeoff and latency curves")
    p_plot.add_argument("--kind", choices=["tradeoff", "latency"], required=True)
    p_plot.add_argument("--n", type=int, required=True)
    p_plot.add_argument("--protocol", default=None)
    p_plot.add_argument("--fuzz-seeds", type=int, default=10)
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(func=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
