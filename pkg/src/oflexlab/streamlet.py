"""Baseline epoch-based chain protocol: replica state machine plus the two
client confirmation rules built on vote counting.

Replica rules (one event loop tick at a time):
  * the epoch's leader proposes a child of the tip of one of the longest
    notarized chains (tie-break: smallest block id), with a payload of
    pending transactions not already on the parent chain;
  * on delivery of the first current-epoch proposal from the epoch's
    leader, a replica votes iff the parent chain is notarized and the
    parent is a tip of one of the longest notarized chains (at most one
    vote per epoch);
  * every replica echoes every message exactly once per message id.

Client rules:
  * confirm_streamlet: a notarized chain containing three adjacent blocks
    with consecutive epochs confirms the chain up to the middle block;
  * confirm_fbft: same pattern, but all three blocks need >= q_k distinct
    votes in the client's view.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .core import (
    GENESIS,
    GENESIS_ID,
    Block,
    Log,
    chain_to_log,
    is_descendant,
    notarization_quorum,
)
from .netsim import Envelope, Machine, Outgoing


@dataclass(frozen=True)
class ProposalMsg:
    block: Block

    def to_json(self) -> dict:
        return {"type": "proposal", "block": self.block.to_json()}


@dataclass(frozen=True)
class VoteMsg:
    voter: int
    block_id: str
    epoch: int  # epoch in which the vote was cast

    def to_json(self) -> dict:
        return {"type": "vote", "voter": self.voter, "block_id": self.block_id, "epoch": self.epoch}


class ChainView:
    """Incrementally maintained view of blocks, votes, and notarization.

    `chain_ok` holds blocks whose entire parent chain (including the block
    itself) is notarized; `triples` collects (middle_height, middle_id,
    top_id) for every run of three adjacent consecutive-epoch blocks on a
    chain in `chain_ok` (genesis does not participate in triples).
    Votes referencing unknown blocks are buffered and counted on arrival.
    """

    def __init__(self, n: int, q: Optional[int] = None) -> None:
        self.n = n
        self.q = q if q is not None else notarization_quorum(n)
        self.blocks: dict = {GENESIS_ID: GENESIS}
        self.votes: dict = {GENESIS_ID: set(range(n))}  # genesis: notarized by definition
        self.children: dict = {}
        self.orphans: dict = {}  # parent_id -> [Block] awaiting the parent
        self.pending_votes: dict = {}  # block_id -> voter set, block unknown
        self.notarized = {GENESIS_ID}
        self.chain_ok = {GENESIS_ID}
        self.max_height = 0
        self.tips = [GENESIS_ID]  # chain_ok blocks at max_height
        self.triples: list = []  # (middle_height, middle_id, top_id)
        self.vote_thresholds: set = set()
        self.dirty = False  # set on chain_ok growth or threshold crossings

    # -- ingestion ------------------------------------------------------

    def add_block(self, block: Block) -> None:
        if block.id in self.blocks:
            return
        if block.parent not in self.blocks:
            self.orphans.setdefault(block.parent, []).append(block)
            return
        self._attach(block)

    def _attach(self, block: Block) -> None:
        parent = self.blocks[block.parent]
        if block.height != parent.height + 1 or block.epoch <= 0:
            return  # malformed; unresolvable blocks are simply never counted
        self.blocks[block.id] = block
        self.children.setdefault(block.parent, []).append(block.id)
        voters = self.pending_votes.pop(block.id, set())
        existing = self.votes.setdefault(block.id, set())
        old = len(existing)
        existing.update(voters)
        self._after_count_change(block.id, old, len(existing))
        for orphan in self.orphans.pop(block.id, []):
            self._attach(orphan)

    def add_vote(self, voter: int, block_id: str) -> None:
        if block_id not in self.blocks:
            self.pending_votes.setdefault(block_id, set()).add(voter)
            return
        s = self.votes.setdefault(block_id, set())
        if voter in s:
            return
        old = len(s)
        s.add(voter)
        self._after_count_change(block_id, old, old + 1)

    def _after_count_change(self, block_id: str, old: int, new: int) -> None:
        for t in self.vote_thresholds:
            if old < t <= new:
                self.dirty = True
        if new >= self.q and block_id not in self.notarized:
            self.notarized.add(block_id)
            parent = self.blocks[block_id].parent
            if parent in self.chain_ok:
                self._promote(block_id)

    def _promote(self, block_id: str) -> None:
        self.chain_ok.add(block_id)
        self.dirty = True
        block = self.blocks[block_id]
        if block.height > self.max_height:
            self.max_height = block.height
            self.tips = [block_id]
        elif block.height == self.max_height:
            self.tips.append(block_id)
        parent = self.blocks[block.parent]
        if parent.id != GENESIS_ID:
            grand = self.blocks[parent.parent]
            if (
                grand.id != GENESIS_ID
                and block.epoch == parent.epoch + 1
                and parent.epoch == grand.epoch + 1
            ):
                self.triples.append((parent.height, parent.id, block_id))
        for child in self.children.get(block_id, []):
            if child in self.notarized and child not in self.chain_ok:
                self._promote(child)

    # -- queries ----------------------------------------------------------

    def count(self, block_id: str) -> int:
        return len(self.votes.get(block_id, ()))

    def best_tip(self) -> str:
        return min(self.tips)


def notarized(block_id: str, view: ChainView, q: int) -> bool:
    """True iff the block has votes from >= q distinct replicas (genesis is
    notarized by definition)."""
    if block_id == GENESIS_ID:
        return True
    return view.count(block_id) >= q


def propose(leader: int, view: ChainView, mempool, epoch: int) -> Block:
    """Build the leader's proposal for `epoch`: child of the smallest-id tip
    of a longest notarized chain, payload deduplicated against the parent
    chain."""
    parent_id = view.best_tip()
    parent = view.blocks[parent_id]
    onchain = set(chain_to_log(parent_id, view.blocks))
    payload = [tx for tx in mempool if tx not in onchain]
    from .core import make_block

    return make_block(parent, epoch, payload, leader)


def proposal_vote_ok(block: Block, view: ChainView, lock: Optional[str] = None) -> bool:
    """The structural voting condition: the parent chain is notarized, the
    parent is a tip of one of the longest notarized chains, and (with a
    permalock) the block descends from the lock."""
    if block.parent not in view.chain_ok:
        return False
    parent = view.blocks[block.parent]
    if block.height != parent.height + 1 or block.epoch <= parent.epoch:
        return False
    if parent.height != view.max_height:
        return False
    if lock is not None and lock != GENESIS_ID:
        if not (block.id == lock or is_descendant(block.parent, lock, view.blocks)):
            return False
    return True


def _deepest_middles(view: ChainView, qualifies: Callable[[tuple], bool]) -> list:
    """Middle block ids of the deepest qualifying triples (ties included)."""
    best_h = -1
    out: list = []
    for triple in view.triples:
        h, mid, _top = triple
        if h < best_h or not qualifies(triple):
            continue
        if h > best_h:
            best_h = h
            out = [mid]
        elif mid not in out:
            out.append(mid)
    return sorted(out)


def confirm_streamlet(view: ChainView, q: Optional[int] = None) -> Log:
    """Log of the deepest block that is the middle of three adjacent
    consecutive-epoch blocks on a notarized chain; empty log if none."""
    mids = _deepest_middles(view, lambda t: True)
    if not mids:
        return ()
    return chain_to_log(mids[0], view.blocks)


def confirm_fbft(view: ChainView, q_k: int) -> Log:
    """As confirm_streamlet, but all three blocks of the pattern need >= q_k
    distinct votes in the client's view."""
    mids = fbft_qualifying_middles(view, q_k)
    if not mids:
        return ()
    return chain_to_log(mids[0], view.blocks)


def fbft_qualifying_middles(view: ChainView, q_k: int) -> list:
    def ok(triple) -> bool:
        _h, mid, top = triple
        first = view.blocks[mid].parent
        return (
            view.count(first) >= q_k
            and view.count(mid) >= q_k
            and view.count(top) >= q_k
        )

    return _deepest_middles(view, ok)


def streamlet_qualifying_middles(view: ChainView, q: Optional[int] = None) -> list:
    return _deepest_middles(view, lambda t: True)


class StreamletCore:
    """Pure protocol logic for one replica, shared between the standalone
    replica machine and the gadget's embedded base protocol.

    `events` collects trace records (without the tick field) that the
    hosting machine drains and timestamps.
    """

    def __init__(
        self,
        rid: int,
        n: int,
        delta: int,
        leader_fn: Callable[[int], int],
        lock_rule: bool = False,
    ) -> None:
        self.rid = rid
        self.n = n
        self.delta = delta
        self.leader_fn = leader_fn
        self.lock_rule = lock_rule
        self.view = ChainView(n)
        self.lock = GENESIS_ID if lock_rule else None
        self.mempool: list = []
        self._mempool_set: set = set()
        self.voted_epochs: set = set()
        self.first_proposal: dict = {}  # epoch -> block id of first leader proposal
        self.events: list = []

    def epoch_of(self, tick: int) -> int:
        return tick // (2 * self.delta) + 1

    def input_tx(self, tx) -> None:
        if tx not in self._mempool_set:
            self._mempool_set.add(tx)
            self.mempool.append(tx)

    def step(self, tick: int) -> list:
        epoch = self.epoch_of(tick)
        out = []
        if tick == (epoch - 1) * 2 * self.delta and self.leader_fn(epoch) == self.rid:
            block = propose(self.rid, self.view, self.mempool, epoch)
            self.events.append({"kind": "propose", "actor": self.rid, "block": block.to_json()})
            out.append(("proposal", ProposalMsg(block)))
        return out

    def deliver(self, tick: int, kind: str, body) -> list:
        out = []
        if kind == "proposal":
            block: Block = body.block
            self.view.add_block(block)
            epoch = self.epoch_of(tick)
            if (
                block.epoch == epoch
                and block.proposer == self.leader_fn(epoch)
                and epoch not in self.first_proposal
            ):
                self.first_proposal[epoch] = block.id
                if epoch not in self.voted_epochs and proposal_vote_ok(
                    block, self.view, self.lock
                ):
                    self.voted_epochs.add(epoch)
                    self.events.append(
                        {
                            "kind": "vote",
                            "actor": self.rid,
                            "block_id": block.id,
                            "epoch": epoch,
                            "block_epoch": block.epoch,
                        }
                    )
                    out.append(("vote", VoteMsg(self.rid, block.id, epoch)))
        elif kind == "vote":
            self.view.add_vote(body.voter, body.block_id)
        self._maybe_update_lock()
        return out

    def _maybe_update_lock(self) -> None:
        if not self.lock_rule or not self.view.dirty:
            return
        self.view.dirty = False
        new = deepest_lock_candidate(self.view, self.lock)
        if new is not None:
            self.lock = new
            self.events.append({"kind": "lock-update", "actor": self.rid, "block_id": new})

    def output_log(self) -> Log:
        return confirm_streamlet(self.view)


def deepest_lock_candidate(view: ChainView, lock: str) -> Optional[str]:
    """Deepest triple-middle that strictly extends the current lock, or None."""
    best: Optional[tuple] = None
    for h, mid, _top in view.triples:
        if best is not None and h <= best[0]:
            continue
        if mid == lock or not is_descendant(mid, lock, view.blocks):
            continue
        best = (h, mid)
    return best[1] if best else None


class ReplicaMachine(Machine):
    """Event-loop wrapper for an honest replica: echoes every first-seen
    message, forwards protocol messages to the core, and suppresses all
    output while crashed."""

    def __init__(self, rid: int, core: StreamletCore, emit: Callable[[dict], None]) -> None:
        self.actor = rid
        self.rid = rid
        self.core = core
        self.emit = emit
        self.alive = True
        self.seen: set = set()

    def _drain(self, tick: int, raw: list) -> list:
        events = self.core.events
        self.core.events = []
        if not self.alive:
            return []
        for ev in events:
            self.emit({"tick": tick, **ev})
        return [Outgoing(kind, body, self.rid) for kind, body in raw]

    def on_tick(self, tick: int) -> list:
        if not self.alive:
            self.core.events = []
            return []
        return self._drain(tick, self.core.step(tick))

    def on_deliver(self, tick: int, env: Envelope) -> list:
        if env.msg_id in self.seen:
            return []
        self.seen.add(env.msg_id)
        outs = []
        if self.alive and env.author != self.rid:
            outs.append(Outgoing(env.kind, env.body, env.author, msg_id=env.msg_id))
        outs.extend(self._drain(tick, self.core.deliver(tick, env.kind, env.body)))
        if not self.alive:
            return []
        return outs


class PassiveMachine(Machine):
    """Adversary-controlled replica shell; the strategy authors all traffic."""

    def __init__(self, rid: int) -> None:
        self.actor = rid
        self.rid = rid


class StreamletClientMachine(Machine):
    """A client: consumes the gossip stream, evaluates its confirmation rule
    on material view changes, and records every change of its confirmed log."""

    def __init__(self, name: str, policy, n: int, rule: str, emit) -> None:
        self.actor = name
        self.name = name
        self.policy = policy
        self.rule = rule  # "streamlet" | "fbft" | "oflex"
        self.emit = emit
        self.view = ChainView(n)
        self.view.vote_thresholds = {notarization_quorum(n), policy.quorum}
        self.seen: set = set()
        self.last_logs: list = []

    def qualifying_middles(self) -> list:
        if self.rule == "fbft":
            return fbft_qualifying_middles(self.view, self.policy.quorum)
        if self.rule == "oflex":
            from .oflex_streamlet import oflex_qualifying_middles

            return oflex_qualifying_middles(self.view, self.policy.quorum)
        return streamlet_qualifying_middles(self.view)

    def on_deliver(self, tick: int, env: Envelope) -> list:
        if env.msg_id in self.seen:
            return []
        self.seen.add(env.msg_id)
        if env.kind == "proposal":
            self.view.add_block(env.body.block)
        elif env.kind == "vote":
            self.view.add_vote(env.body.voter, env.body.block_id)
        else:
            return []
        if self.view.dirty:
            self.view.dirty = False
            self._evaluate(tick)
        return []

    def _evaluate(self, tick: int) -> None:
        logs = [
            (chain_to_log(mid, self.view.blocks), mid)
            for mid in self.qualifying_middles()
        ]
        if [lg for lg, _ in logs] == self.last_logs:
            return
        for log, mid in logs:
            if log not in self.last_logs:
                self.emit(
                    {
                        "tick": tick,
                        "kind": "confirm",
                        "actor": self.name,
                        "log": list(log),
                        "block_id": mid,
                        "quorum": self.policy.quorum,
                    }
                )
        self.last_logs = [lg for lg, _ in logs]
