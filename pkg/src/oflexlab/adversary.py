"""Byzantine strategies: scripted attack fixtures and fuzzable adversaries.

A strategy controls a fixed replica subset, chooses every per-recipient
delivery delay within the partial-synchrony bounds, and may author
arbitrary well-formed messages — but only for controlled replicas (the
simulator raises on forgery attempts).  Scripted attacks are expressed as
delivery-schedule routing plus message scripts, so they replay bit-for-bit
as regression fixtures.
"""
from __future__ import annotations

import random
from typing import Iterable, Optional

from .core import GENESIS, Block, ClientPolicy, make_block, notarization_quorum
from .gadget import OvoteMsg
from .netsim import ConfigError, Envelope, Outgoing, ScenarioConfig
from .streamlet import ProposalMsg, VoteMsg


class Strategy:
    """Honest-network default: no controlled replicas, all delays = 1 tick."""

    name = "honest"
    machine_mode = "passive"  # controlled replicas: "passive" shells or "honest" machines

    def __init__(self, controlled: Iterable[int] = ()) -> None:
        self.controlled = frozenset(controlled)
        self.sim = None

    def bind(self, sim) -> None:
        self.sim = sim

    # -- delay policy ----------------------------------------------------

    def withhold(self, env: Envelope, recipient) -> bool:
        return False

    def choose_delay(self, env: Envelope, recipient, now: int) -> int:
        if self.withhold(env, recipient):
            return max(self.sim.gst, now) + self.sim.delta
        return now + 1

    # -- hooks -----------------------------------------------------------

    def on_send(self, msg_id, kind, body, author, sender, tick) -> None:
        pass

    def on_tick(self, sim, tick) -> None:
        pass

    # -- helpers ---------------------------------------------------------

    def broadcast(self, kind: str, body, author: int) -> None:
        self.sim.adversary_send(Outgoing(kind, body, author), self.sim.tick)

    def vote_all(self, block: Block, epoch: int) -> None:
        for rid in sorted(self.controlled):
            self.broadcast("vote", VoteMsg(rid, block.id, epoch), rid)


class CrashStrategy(Strategy):
    """Controlled replicas run honestly, stop sending at `at_tick`, and
    optionally resume at `revive_at`."""

    name = "crash"
    machine_mode = "honest"

    def __init__(self, controlled, at_tick: int, revive_at: Optional[int] = None) -> None:
        super().__init__(controlled)
        self.at_tick = at_tick
        self.revive_at = revive_at

    def on_tick(self, sim, tick) -> None:
        if tick == self.at_tick:
            for rid in sorted(self.controlled):
                sim.machines[rid].alive = False
                sim.trace.add({"tick": tick, "kind": "crash", "actor": rid})
        if self.revive_at is not None and tick == self.revive_at:
            for rid in sorted(self.controlled):
                sim.machines[rid].alive = True
                sim.trace.add({"tick": tick, "kind": "crash", "actor": rid, "revived": True})


class EquivocatorStrategy(Strategy):
    """Controlled replicas vote for every block and ovote every log they
    observe, on every branch."""

    name = "equivocator"

    def __init__(self, controlled) -> None:
        super().__init__(controlled)
        self.known_blocks: dict = {}
        self.known_logs: list = []
        self._voted: set = set()
        self._ovoted: set = set()

    def on_send(self, msg_id, kind, body, author, sender, tick) -> None:
        if kind == "proposal" and body.block.id not in self.known_blocks:
            self.known_blocks[body.block.id] = body.block
        elif kind == "ovote":
            log = tuple(body.log)
            if log not in self.known_logs:
                self.known_logs.append(log)

    def on_tick(self, sim, tick) -> None:
        epoch = sim.epoch_of(tick)
        for rid in sorted(self.controlled):
            for bid in list(self.known_blocks):
                if (rid, bid) not in self._voted:
                    self._voted.add((rid, bid))
                    self.broadcast("vote", VoteMsg(rid, bid, epoch), rid)
            for log in list(self.known_logs):
                if (rid, log) not in self._ovoted:
                    self._ovoted.add((rid, log))
                    self.broadcast("ovote", OvoteMsg(rid, log), rid)


class RandomByzantineStrategy(Strategy):
    """Seeded protocol-shaped chaos: random votes among known blocks, random
    equivocating proposals when leading, random delays within bounds."""

    name = "random_byzantine"

    def __init__(self, controlled, seed: int, vote_rate: float = 0.6) -> None:
        super().__init__(controlled)
        self.rng = random.Random(f"random-byzantine:{seed}")
        self.vote_rate = vote_rate
        self.known_blocks: list = []
        self._known_ids: set = set()

    def on_send(self, msg_id, kind, body, author, sender, tick) -> None:
        if kind == "proposal" and body.block.id not in self._known_ids:
            self._known_ids.add(body.block.id)
            self.known_blocks.append(body.block)

    def choose_delay(self, env: Envelope, recipient, now: int) -> int:
        return self.rng.randint(now + 1, max(self.sim.gst, now) + self.sim.delta)

    def on_tick(self, sim, tick) -> None:
        epoch = sim.epoch_of(tick)
        at_epoch_start = tick == sim.epoch_start(epoch)
        for rid in sorted(self.controlled):
            if at_epoch_start and sim.leader_fn(epoch) == rid:
                for variant in range(2):
                    parent = (
                        self.rng.choice(self.known_blocks) if self.known_blocks else GENESIS
                    )
                    if parent.epoch >= epoch:
                        parent = GENESIS
                    payload = [f"x{epoch}.{variant}"] if self.rng.random() < 0.5 else []
                    block = make_block(parent, epoch, payload, rid)
                    self.broadcast("proposal", ProposalMsg(block), rid)
            if self.known_blocks and self.rng.random() < self.vote_rate:
                block = self.rng.choice(self.known_blocks)
                self.broadcast("vote", VoteMsg(rid, block.id, epoch), rid)


class SplitBrainStrategy(Strategy):
    """Two-brain equivocation: the controlled set runs one chain for the
    honest partition P (and one client) and an inconsistent chain for the
    honest partition Q (and the other client); cross-partition traffic is
    delayed past the horizon."""

    name = "split_brain"

    def __init__(self, controlled, part_p, part_q, client_p: str, client_q: str, epochs: int) -> None:
        super().__init__(controlled)
        self.part_p = frozenset(part_p)
        self.part_q = frozenset(part_q)
        self.client_p = client_p
        self.client_q = client_q
        self.epochs = epochs
        self.branch: dict = {}  # block id -> "p" | "q"
        self._tips = {"p": GENESIS, "q": GENESIS}

    def _actor_side(self, actor) -> Optional[str]:
        if actor in self.part_p or actor == self.client_p:
            return "p"
        if actor in self.part_q or actor == self.client_q:
            return "q"
        return None

    def _env_side(self, env: Envelope) -> Optional[str]:
        if env.kind == "proposal":
            return self.branch.get(env.body.block.id)
        if env.kind == "vote":
            return self.branch.get(env.body.block_id)
        return None

    def withhold(self, env: Envelope, recipient) -> bool:
        env_side = self._env_side(env)
        rec_side = self._actor_side(recipient)
        return env_side is not None and rec_side is not None and env_side != rec_side

    def on_tick(self, sim, tick) -> None:
        epoch = sim.epoch_of(tick)
        if epoch > self.epochs or tick != sim.epoch_start(epoch):
            return
        leader = sim.leader_fn(epoch)
        for side, seed_tx in (("p", "tx1"), ("q", "tx2")):
            payload = [seed_tx] if epoch == 1 else []
            block = make_block(self._tips[side], epoch, payload, leader)
            self._tips[side] = block
            self.branch[block.id] = side
            self.broadcast("proposal", ProposalMsg(block), leader)
            self.vote_all(block, epoch)


def split_brain(
    n: int,
    tau_live_k: int,
    tau_live_k2: int,
    *,
    delta: int = 4,
    protocol: str = "oflex-streamlet",
    reduce_f: int = 0,
    epochs: int = 5,
) -> tuple:
    """Scripted two-world attack against the two clients' liveness
    resiliences: f = n - tau_live_k - tau_live_k2 (minus reduce_f for the
    just-below-the-boundary variant, where the spare honest replica joins
    partition P and the Q-side brain misses its quorum)."""
    f = n - tau_live_k - tau_live_k2 - reduce_f
    if f < 1:
        raise ConfigError("split_brain needs at least one controlled replica")
    if f > n:
        raise ConfigError("infeasible partition sizes")
    controlled = list(range(f))
    honest = list(range(f, n))
    part_p = honest[: tau_live_k + reduce_f]
    part_q = honest[tau_live_k + reduce_f :]
    q_k = n - tau_live_k  # served by the Q-side brain
    q_k2 = n - tau_live_k2  # served by the P-side brain
    if min(q_k, q_k2) < notarization_quorum(n):
        raise ConfigError("client quorums below the replica notarization quorum")
    strategy = SplitBrainStrategy(
        controlled, part_p, part_q, client_p="client_k2", client_q="client_k", epochs=epochs
    )
    horizon = (epochs + 1) * 2 * delta
    config = ScenarioConfig(
        n=n,
        delta=delta,
        gst=horizon,
        horizon=horizon,
        protocol=protocol,
        leaders=[0] * (epochs + 2),
        clients=[
            ClientPolicy.from_quorum("client_k", n, q_k),
            ClientPolicy.from_quorum("client_k2", n, q_k2),
        ],
        adversary=strategy,
    )
    return strategy, config


class FbftBypassStrategy(Strategy):
    """Quorum bypass: full votes on A,B,C; an adversary-only notarized fork
    E,F,G from genesis; then proposals H,I,J on the fork that honest
    replicas accept under the baseline rule (tip of one of the longest
    notarized chains) but refuse under the permalock rule."""

    name = "fbft_bypass"

    def __init__(self, controlled, hidden_client: str) -> None:
        super().__init__(controlled)
        self.hidden_client = hidden_client
        self.fork_blocks: set = set()
        self._main_tip = GENESIS
        self._fork_tip = GENESIS

    def _env_in_fork(self, env: Envelope) -> bool:
        if env.kind == "proposal":
            return env.body.block.id in self.fork_blocks
        if env.kind == "vote":
            return env.body.block_id in self.fork_blocks
        return False

    def withhold(self, env: Envelope, recipient) -> bool:
        return recipient == self.hidden_client and self._env_in_fork(env)

    def on_tick(self, sim, tick) -> None:
        epoch = sim.epoch_of(tick)
        if epoch > 9 or tick != sim.epoch_start(epoch):
            return
        leader = sim.leader_fn(epoch)
        if epoch <= 3:
            block = make_block(self._main_tip, epoch, [f"tx{epoch}"], leader)
            self._main_tip = block
        else:
            block = make_block(self._fork_tip, epoch, [f"fx{epoch}"], leader)
            self._fork_tip = block
            self.fork_blocks.add(block.id)
        self.broadcast("proposal", ProposalMsg(block), leader)
        self.vote_all(block, epoch)


def fbft_bypass(
    n: int,
    q: int,
    q_k: int,
    *,
    delta: int = 4,
    protocol: str = "fbft-streamlet",
    reduce_f: int = 0,
) -> tuple:
    """Fixture with f = q_k + q - n controlled replicas (minus reduce_f for
    the below-the-boundary variant, where the fork cannot be notarized)."""
    if q != notarization_quorum(n):
        raise ConfigError("q must be the replica notarization quorum")
    f = q_k + q - n - reduce_f
    if not (1 <= f <= n):
        raise ConfigError("insufficient controlled replicas for the bypass")
    controlled = list(range(f))
    strategy = FbftBypassStrategy(controlled, hidden_client="client_k")
    horizon = 10 * 2 * delta
    config = ScenarioConfig(
        n=n,
        delta=delta,
        gst=horizon,
        horizon=horizon,
        protocol=protocol,
        leaders=[0] * 12,
        clients=[
            ClientPolicy.from_quorum("client_k", n, q_k),
            ClientPolicy.from_quorum("client_k2", n, q_k),
        ],
        adversary=strategy,
    )
    return strategy, config


class GadgetSplitStrategy(EquivocatorStrategy):
    """Gadget equivocation with client-side routing: controlled replicas
    ovote every observed log; each client only sees ovotes for one branch."""

    name = "gadget_split"

    def __init__(self, controlled, routing: dict) -> None:
        super().__init__(controlled)
        self.routing = routing  # client name -> first tx of the branch it must NOT see

    def withhold(self, env: Envelope, recipient) -> bool:
        if env.kind != "ovote" or recipient not in self.routing:
            return False
        log = tuple(env.body.log)
        return bool(log) and log[0] == self.routing[recipient]


def gadget_split(n: int = 4, *, delta: int = 2) -> tuple:
    """Gadget violation fixture: two honest replicas receive inconsistent
    base outputs, f = q_k + q_k' - n controlled replicas ovote both branches,
    and routing makes the two clients confirm inconsistent logs."""
    if n != 4:
        raise ConfigError("fixture is sized for n=4")
    controlled = [0, 1]
    strategy = GadgetSplitStrategy(
        controlled, routing={"client_k": "txB", "client_k2": "txA"}
    )
    horizon = 10
    config = ScenarioConfig(
        n=n,
        delta=delta,
        gst=horizon,
        horizon=horizon,
        protocol="gadget",
        clients=[
            ClientPolicy.from_quorum("client_k", n, 3),
            ClientPolicy.from_quorum("client_k2", n, 3),
        ],
        adversary=strategy,
        base={"script": {2: [(1, ("txA",))], 3: [(1, ("txB",))]}},
    )
    return strategy, config


def equivocator(controlled=()) -> EquivocatorStrategy:
    return EquivocatorStrategy(controlled)


def crash(controlled, at_tick: int, revive_at: Optional[int] = None) -> CrashStrategy:
    return CrashStrategy(controlled, at_tick, revive_at)


def random_byzantine(controlled, seed: int) -> RandomByzantineStrategy:
    return RandomByzantineStrategy(controlled, seed)


def _replicas(params) -> list:
    return params.get("replicas", params.get("controlled", []))


STRATEGY_REGISTRY = {
    "honest": lambda params: Strategy(),
    "crash": lambda params: CrashStrategy(
        _replicas(params), params.get("at_tick", 0), params.get("revive_at")
    ),
    "equivocator": lambda params: EquivocatorStrategy(_replicas(params)),
    "random_byzantine": lambda params: RandomByzantineStrategy(
        _replicas(params), params.get("seed", 0)
    ),
}


def build_strategy(spec) -> Strategy:
    if spec is None:
        return Strategy()
    if isinstance(spec, Strategy):
        return spec
    if isinstance(spec, dict):
        name = spec.get("name", "honest")
        if name not in STRATEGY_REGISTRY:
            raise ConfigError(f"unknown adversary strategy: {name}")
        return STRATEGY_REGISTRY[name](spec)
    raise ConfigError(f"bad adversary spec: {spec!r}")
