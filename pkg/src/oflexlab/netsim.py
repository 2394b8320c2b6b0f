"""Deterministic, seedable discrete-event network simulator.

Partial synchrony with eventual synchrony: one tick is the smallest
schedulable delay unit, epochs last 2*delta ticks, and every delivery of a
message sent at tick t happens at some tick d with
t + 1 <= d <= max(gst, t) + delta.  The adversary strategy picks every
per-recipient delay (the honest default is t + 1); violating the bound is a
scenario-validation error, not silently clamped.

Machines (replica and client state machines) are driven exclusively by this
single event loop: deliveries due at the current tick first, then the
adversary strategy's tick hook, then each machine's tick hook in actor
order.  Identical (config, seed) inputs yield byte-identical traces.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .core import Block


class ConfigError(Exception):
    """Invalid scenario configuration."""


class DelayError(Exception):
    """A strategy chose a delivery time outside the model's bounds."""


class ForgeryError(Exception):
    """A strategy tried to author a message for an uncontrolled replica."""


@dataclass(frozen=True)
class Envelope:
    """One copy of a message in flight to one recipient.

    `author` is the replica whose (simulated) signature the message carries;
    `sender` is whoever put this copy on the wire (the author, or an honest
    replica echoing it).  `msg_id` identifies the message itself and is
    shared across echoes.
    """

    msg_id: int
    kind: str  # "proposal" | "vote" | "ovote" | "base"
    body: object
    author: int
    sender: object
    sent_at: int


@dataclass(frozen=True)
class Outgoing:
    """A machine's request to broadcast a message.

    msg_id None means "new message" (the simulator assigns the id); a
    concrete msg_id marks an echo of an existing message.
    """

    kind: str
    body: object
    author: int
    msg_id: Optional[int] = None


@dataclass
class ScenarioConfig:
    """Everything that determines one execution; run() is a pure function of
    this plus nothing else."""

    n: int
    horizon: int
    delta: int = 4
    gst: int = 0
    seed: int = 0
    protocol: str = "oflex-streamlet"  # streamlet | fbft-streamlet | oflex-streamlet | gadget
    leaders: object = "round-robin"  # "round-robin" | "random" | explicit per-epoch list
    clients: list = field(default_factory=list)  # ClientPolicy list
    adversary: object = None  # Strategy instance, {"name": ..., params}, or None
    injections: list = field(default_factory=list)  # (tick, tx) pairs, to all honest replicas
    base: object = None  # gadget base: factory, {"script": ...}, or None for the chain base
    record_network: bool = True


class Machine:
    """Interface for event-loop-driven state machines."""

    actor: object

    def on_tick(self, tick: int) -> list:
        return []

    def on_deliver(self, tick: int, env: Envelope) -> list:
        return []


def body_to_json(kind: str, body) -> dict:
    if hasattr(body, "to_json"):
        return body.to_json()
    return {"value": body}


class Trace:
    """Totally ordered list of event records, serializable as NDJSON."""

    def __init__(self) -> None:
        self.records: list = []

    def add(self, rec: dict) -> None:
        self.records.append(rec)

    def to_ndjson(self) -> str:
        return "".join(
            json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n"
            for rec in self.records
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_ndjson())

    @staticmethod
    def load(path) -> "Trace":
        tr = Trace()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    tr.add(json.loads(line))
        return tr

    @staticmethod
    def from_records(records: Iterable[dict]) -> "Trace":
        tr = Trace()
        for rec in records:
            tr.add(rec)
        return tr

    @property
    def meta(self) -> dict:
        if self.records and self.records[0].get("kind") == "meta":
            return self.records[0]
        return {}

    def events(self, *kinds: str) -> list:
        if not kinds:
            return [r for r in self.records if r.get("kind") != "meta"]
        return [r for r in self.records if r.get("kind") in kinds]


class Simulation:
    """The single-threaded event loop binding machines, strategy, and trace."""

    def __init__(
        self,
        *,
        n: int,
        delta: int,
        gst: int,
        horizon: int,
        strategy,
        machines: dict,
        trace: Trace,
        leader_fn: Callable[[int], int],
        record_network: bool = True,
        pre_tick: Optional[Callable[[int], None]] = None,
    ) -> None:
        if gst > horizon:
            raise ConfigError("gst must be <= horizon")
        if delta < 1:
            raise ConfigError("delta must be >= 1")
        self.n = n
        self.delta = delta
        self.gst = gst
        self.horizon = horizon
        self.strategy = strategy
        self.machines = machines  # actor -> Machine, insertion order = actor order
        self.trace = trace
        self.leader_fn = leader_fn
        self.record_network = record_network
        self.pre_tick = pre_tick
        self.recipients = list(machines.keys())
        self._queue: list = []  # (deliver_at, seq, env_index)
        self._envs: list = []
        self._msg_seq = 0
        self._sched_seq = 0
        self.tick = 0
        strategy.bind(self)

    # -- scheduling ----------------------------------------------------

    def epoch_of(self, tick: int) -> int:
        return tick // (2 * self.delta) + 1

    def epoch_start(self, epoch: int) -> int:
        return (epoch - 1) * 2 * self.delta

    def _new_msg_id(self) -> int:
        self._msg_seq += 1
        return self._msg_seq

    def send(self, sender, out: Outgoing, tick: int) -> int:
        """Broadcast one message (or echo) to every replica and client.

        Each recipient's delivery tick is chosen by the adversary strategy
        within the partial-synchrony bounds; self-delivery is fixed at
        tick + 1 and not strategy-controlled.
        """
        msg_id = out.msg_id if out.msg_id is not None else self._new_msg_id()
        if self.record_network:
            self.trace.add(
                {
                    "tick": tick,
                    "kind": "send",
                    "actor": sender,
                    "author": out.author,
                    "msg_id": msg_id,
                    "msg_kind": out.kind,
                    "msg": body_to_json(out.kind, out.body),
                    "echo": out.msg_id is not None,
                }
            )
        self.strategy.on_send(msg_id, out.kind, out.body, out.author, sender, tick)
        bound = max(self.gst, tick) + self.delta
        for recipient in self.recipients:
            env = Envelope(msg_id, out.kind, out.body, out.author, sender, tick)
            if recipient == sender:
                deliver_at = tick + 1
            else:
                deliver_at = self.strategy.choose_delay(env, recipient, tick)
            if not (tick + 1 <= deliver_at <= bound):
                raise DelayError(
                    f"delivery at {deliver_at} for send at {tick} violates "
                    f"[{tick + 1}, {bound}]"
                )
            self._envs.append((env, recipient))
            heapq.heappush(self._queue, (deliver_at, self._sched_seq, len(self._envs) - 1))
            self._sched_seq += 1
        return msg_id

    def adversary_send(self, out: Outgoing, tick: int) -> int:
        """Strategy-authored broadcast; only controlled replicas may author."""
        if out.author not in self.strategy.controlled:
            raise ForgeryError(f"strategy may not author for replica {out.author}")
        return self.send(out.author, out, tick)

    # -- main loop ------------------------------------------------------

    def run(self) -> Trace:
        for tick in range(self.horizon):
            self.tick = tick
            if self.pre_tick is not None:
                self.pre_tick(tick)
            while self._queue and self._queue[0][0] == tick:
                _, _, idx = heapq.heappop(self._queue)
                env, recipient = self._envs[idx]
                machine = self.machines[recipient]
                if self.record_network:
                    self.trace.add(
                        {
                            "tick": tick,
                            "kind": "deliver",
                            "actor": recipient,
                            "msg_id": env.msg_id,
                        }
                    )
                for reply in machine.on_deliver(tick, env):
                    self.send(recipient, reply, tick)
            self.strategy.on_tick(self, tick)
            for actor, machine in self.machines.items():
                for out in machine.on_tick(tick):
                    self.send(actor, out, tick)
        return self.trace
