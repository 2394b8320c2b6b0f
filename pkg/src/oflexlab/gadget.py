"""Generic flexible-confirmation gadget over an abstract base protocol.

Each replica consumes a base protocol closed-box.  Whenever the base's
output log strictly extends the replica's locked log, the replica advances
the lock and broadcasts an ovote carrying the new log; otherwise it does
nothing — in particular a base whose output regresses or forks never makes
an honest replica emit two inconsistent ovotes.  A client with quorum q_k
confirms the longest log L such that >= q_k distinct replicas ovoted L or
an extension of L; if two prefix-incomparable logs both qualify (possible
only above the client's resilience) the client records both, which the
auditor reports as a violation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .core import Log, is_prefix
from .netsim import Envelope, Machine, Outgoing
from .streamlet import StreamletCore


@dataclass(frozen=True)
class OvoteMsg:
    voter: int
    log: tuple

    def to_json(self) -> dict:
        return {"type": "ovote", "voter": self.voter, "log": list(self.log)}


@dataclass
class GadgetReplicaState:
    """Lock state of one gadget replica; the lock only moves to strict
    extensions of itself."""

    locked_log: tuple = ()
    last_emitted: Optional[tuple] = None


def on_base_output(replica: int, new_log: Log, state: GadgetReplicaState) -> Optional[OvoteMsg]:
    """Advance the lock and emit an ovote iff `new_log` strictly extends the
    locked log; otherwise no action."""
    new_log = tuple(new_log)
    if new_log == state.locked_log or not is_prefix(state.locked_log, new_log):
        return None
    state.locked_log = new_log
    state.last_emitted = new_log
    return OvoteMsg(replica, new_log)


def gadget_support(overtes: Iterable, log: tuple) -> int:
    """Number of distinct replicas that ovoted `log` or an extension of it."""
    voters = set()
    for voter, ov_log in _normalize(overtes):
        if is_prefix(log, ov_log):
            voters.add(voter)
    return len(voters)


def _normalize(overtes: Iterable) -> list:
    out = []
    for item in overtes:
        if isinstance(item, OvoteMsg):
            out.append((item.voter, tuple(item.log)))
        else:
            voter, log = item
            out.append((voter, tuple(log)))
    return out


def gadget_qualifying_maximal(overtes: Iterable, q_k: int) -> list:
    """All prefix-maximal logs with support >= q_k (singleton below the
    resilience boundary; multiple entries signal a safety violation)."""
    pairs = _normalize(overtes)
    candidates = sorted({log for _voter, log in pairs}, key=lambda lg: (len(lg), lg))
    qualifying = []
    for log in candidates:
        voters = {voter for voter, ov in pairs if is_prefix(log, ov)}
        if len(voters) >= q_k:
            qualifying.append(log)
    maximal = [
        lg
        for lg in qualifying
        if not any(other != lg and is_prefix(lg, other) for other in qualifying)
    ]
    return sorted(maximal, key=lambda lg: (len(lg), lg))


def confirm_gadget(overtes: Iterable, q_k: int) -> Log:
    """The longest log ovoted (directly or via extensions) by >= q_k distinct
    replicas; empty log if none.  Ties between incomparable maximal logs are
    broken deterministically here; the client machine reports them all."""
    maximal = gadget_qualifying_maximal(overtes, q_k)
    if not maximal:
        return ()
    return max(maximal, key=lambda lg: (len(lg), lg))


class BaseProtocol:
    """Closed-box base protocol interface, drivable by the outer event loop."""

    def input_tx(self, tx) -> None:  # pragma: no cover - interface
        pass

    def step(self, tick: int) -> list:
        """Advance local time; returns [(kind, body), ...] messages to send."""
        return []

    def deliver(self, tick: int, kind: str, body) -> list:
        return []

    def output_log(self) -> Log:
        return ()

    def drain_events(self) -> list:
        return []


class ScriptedBase(BaseProtocol):
    """A base protocol whose per-replica output follows a script exactly,
    including logs that are mutually inconsistent across replicas."""

    def __init__(self, entries: Iterable) -> None:
        # entries: iterable of (tick, log); output at tick t is the last
        # scheduled log with scheduled tick <= t.
        self.entries = sorted(((int(t), tuple(log)) for t, log in entries), key=lambda e: e[0])
        self._now = -1

    def step(self, tick: int) -> list:
        self._now = tick
        return []

    def output_log(self) -> Log:
        current: tuple = ()
        for t, log in self.entries:
            if t <= self._now:
                current = log
            else:
                break
        return current


def scriptable_base(script: Iterable) -> Callable[..., BaseProtocol]:
    """Factory of per-replica scripted bases; `script` maps replica id to a
    list of (tick, log) assignments."""
    table = {int(rid): list(entries) for rid, entries in dict(script).items()}

    def build(rid: int, n: int, delta: int, leader_fn) -> BaseProtocol:
        return ScriptedBase(table.get(rid, []))

    return build


class StreamletBase(BaseProtocol):
    """The baseline chain protocol wrapped behind the closed-box interface;
    output log is its own three-adjacent-blocks confirmation."""

    def __init__(self, rid: int, n: int, delta: int, leader_fn) -> None:
        self.core = StreamletCore(rid, n, delta, leader_fn, lock_rule=False)

    def input_tx(self, tx) -> None:
        self.core.input_tx(tx)

    def step(self, tick: int) -> list:
        return self.core.step(tick)

    def deliver(self, tick: int, kind: str, body) -> list:
        if kind in ("proposal", "vote"):
            return self.core.deliver(tick, kind, body)
        return []

    def output_log(self) -> Log:
        return self.core.output_log()

    def drain_events(self) -> list:
        events = self.core.events
        self.core.events = []
        return events


def streamlet_base() -> Callable[..., BaseProtocol]:
    """Factory wrapping the baseline protocol as a gadget base."""

    def build(rid: int, n: int, delta: int, leader_fn) -> BaseProtocol:
        return StreamletBase(rid, n, delta, leader_fn)

    return build


class GadgetReplicaMachine(Machine):
    """Gadget replica: drives the base through the shared event loop, polls
    its output once per tick, and broadcasts ovotes on strict lock
    extensions."""

    def __init__(self, rid: int, base: BaseProtocol, emit) -> None:
        self.actor = rid
        self.rid = rid
        self.base = base
        self.state = GadgetReplicaState()
        self.emit = emit
        self.alive = True
        self.seen: set = set()

    def _wrap(self, tick: int, raw: list) -> list:
        events = self.base.drain_events()
        if not self.alive:
            return []
        for ev in events:
            self.emit({"tick": tick, **ev})
        return [Outgoing(kind, body, self.rid) for kind, body in raw]

    def on_tick(self, tick: int) -> list:
        outs = self._wrap(tick, self.base.step(tick))
        ovote = on_base_output(self.rid, self.base.output_log(), self.state)
        if ovote is not None and self.alive:
            self.emit(
                {"tick": tick, "kind": "lock-update", "actor": self.rid, "log": list(ovote.log)}
            )
            self.emit({"tick": tick, "kind": "ovote", "actor": self.rid, "log": list(ovote.log)})
            outs.append(Outgoing("ovote", ovote, self.rid))
        return outs if self.alive else []

    def on_deliver(self, tick: int, env: Envelope) -> list:
        if env.msg_id in self.seen:
            return []
        self.seen.add(env.msg_id)
        outs = []
        if self.alive and env.author != self.rid:
            outs.append(Outgoing(env.kind, env.body, env.author, msg_id=env.msg_id))
        outs.extend(self._wrap(tick, self.base.deliver(tick, env.kind, env.body)))
        return outs if self.alive else []


class GadgetClientMachine(Machine):
    """Client counting ovotes: re-evaluates on each new ovote and records
    every maximal qualifying log whenever the answer changes."""

    def __init__(self, name: str, policy, n: int, emit) -> None:
        self.actor = name
        self.name = name
        self.policy = policy
        self.emit = emit
        self.seen: set = set()
        self.overtes: list = []  # (voter, log)
        self._have: set = set()
        self.last_logs: list = []

    def on_deliver(self, tick: int, env: Envelope) -> list:
        if env.msg_id in self.seen:
            return []
        self.seen.add(env.msg_id)
        if env.kind != "ovote":
            return []
        key = (env.body.voter, tuple(env.body.log))
        if key in self._have:
            return []
        self._have.add(key)
        self.overtes.append(key)
        logs = gadget_qualifying_maximal(self.overtes, self.policy.quorum)
        if logs == self.last_logs:
            return []
        for log in logs:
            if log not in self.last_logs:
                self.emit(
                    {
                        "tick": tick,
                        "kind": "confirm",
                        "actor": self.name,
                        "log": list(log),
                        "block_id": None,
                        "quorum": self.policy.quorum,
                    }
                )
        self.last_logs = logs
        return []
