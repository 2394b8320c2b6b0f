"""Chain algebra, log predicates, and quorum/resilience arithmetic.

Everything here is a pure function over immutable values; the protocol
modules, the auditors, and the forensic analyzers all share these
definitions so that "consistent", "descendant", and "feasible quorum"
mean exactly one thing across the code base.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

Tx = str
BlockId = str
ReplicaId = int
# A log is an ordered sequence of opaque transaction identifiers.
Log = tuple

GENESIS_ID: BlockId = "genesis"


@dataclass(frozen=True)
class Block:
    """A block in the vote graph; identity is a digest of its content."""

    id: BlockId
    parent: Optional[BlockId]
    epoch: int
    height: int
    payload: tuple
    proposer: ReplicaId

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "parent": self.parent,
            "epoch": self.epoch,
            "height": self.height,
            "payload": list(self.payload),
            "proposer": self.proposer,
        }

    @staticmethod
    def from_json(d: dict) -> "Block":
        return Block(
            id=d["id"],
            parent=d["parent"],
            epoch=d["epoch"],
            height=d["height"],
            payload=tuple(d["payload"]),
            proposer=d["proposer"],
        )


GENESIS = Block(id=GENESIS_ID, parent=None, epoch=0, height=0, payload=(), proposer=-1)


def make_block(parent: Block, epoch: int, payload: Sequence[Tx], proposer: ReplicaId) -> Block:
    """Build a child block; the id is a content digest, injective over
    (parent, epoch, payload, proposer)."""
    material = "\x1f".join(
        [parent.id, str(epoch), str(proposer)] + [str(tx) for tx in payload]
    )
    digest = hashlib.sha256(material.encode()).hexdigest()[:16]
    return Block(
        id=digest,
        parent=parent.id,
        epoch=epoch,
        height=parent.height + 1,
        payload=tuple(payload),
        proposer=proposer,
    )


def is_prefix(a: Sequence[Tx], b: Sequence[Tx]) -> bool:
    """True iff a's transaction sequence is an initial segment of b's
    (equality included)."""
    if len(a) > len(b):
        return False
    return tuple(b[: len(a)]) == tuple(a)


def are_consistent(a: Sequence[Tx], b: Sequence[Tx]) -> bool:
    """Two logs are consistent iff one is a prefix of the other."""
    return is_prefix(a, b) or is_prefix(b, a)


def is_descendant(child: BlockId, ancestor: BlockId, store: Mapping[BlockId, Block]) -> bool:
    """True iff `ancestor` lies on `child`'s parent chain.

    Reflexive: every block is its own descendant.  Raises KeyError if a
    block id cannot be resolved in `store`.
    """
    cur: Optional[BlockId] = child
    if ancestor not in store:
        raise KeyError(ancestor)
    while cur is not None:
        if cur == ancestor:
            return True
        cur = store[cur].parent
    return False


def chain_of(tip: BlockId, store: Mapping[BlockId, Block]) -> list:
    """The chain of blocks from genesis to `tip`, inclusive, in order."""
    out = []
    cur: Optional[BlockId] = tip
    while cur is not None:
        blk = store[cur]
        out.append(blk)
        cur = blk.parent
    out.reverse()
    return out


def chain_to_log(tip: BlockId, store: Mapping[BlockId, Block]) -> Log:
    """Concatenation of payloads from genesis's child to `tip`."""
    txs: list = []
    for blk in chain_of(tip, store):
        txs.extend(blk.payload)
    return tuple(txs)


def notarization_quorum(n: int) -> int:
    """The replica-side vote quorum 2n/3 + 1 (integer arithmetic)."""
    return 2 * n // 3 + 1


def feasible_quorum_range(n: int, tau_live: int, tau_safe: int) -> Optional[tuple]:
    """The integer interval (low, high) of client quorums q that certify the
    resilience pair (tau_live, tau_safe): (n + tau_safe)/2 < q <= n - tau_live.

    Returns None (infeasible) iff 2*tau_live + tau_safe >= n or
    tau_live > tau_safe.  Division is handled exactly: q > (n+tau_safe)/2 is
    evaluated as 2q > n + tau_safe.
    """
    if tau_live < 0 or tau_safe < 0 or n < 1:
        raise ValueError("n must be >= 1 and resiliences non-negative")
    if tau_live > tau_safe or 2 * tau_live + tau_safe >= n:
        return None
    low = (n + tau_safe) // 2 + 1  # smallest integer q with 2q > n + tau_safe
    high = n - tau_live
    if low > high:
        return None
    return (low, high)


@dataclass(frozen=True)
class ClientPolicy:
    """A client's identity, resilience pair, and confirmation quorum."""

    client: str
    tau_live: int
    tau_safe: int
    quorum: int

    def check(self, n: int) -> None:
        if not (0 <= self.tau_live <= self.tau_safe < n):
            raise ValueError(f"bad resilience pair for {self.client}")
        if 2 * self.tau_live + self.tau_safe >= n:
            raise ValueError(f"infeasible resilience pair for {self.client}")
        if not (2 * self.quorum > n + self.tau_safe and self.quorum <= n - self.tau_live):
            raise ValueError(f"quorum outside feasible range for {self.client}")

    @staticmethod
    def from_quorum(client: str, n: int, quorum: int) -> "ClientPolicy":
        """Derive the strongest resilience pair certified by `quorum`."""
        if not (0 < quorum <= n):
            raise ValueError("quorum out of range")
        tau_live = n - quorum
        tau_safe = 2 * quorum - n - 1
        if tau_safe < tau_live:
            raise ValueError(f"quorum {quorum} certifies no feasible pair for n={n}")
        return ClientPolicy(client=client, tau_live=tau_live, tau_safe=tau_safe, quorum=quorum)


def pairwise_consistency_threshold(pk: ClientPolicy, pk2: ClientPolicy, n: int) -> int:
    """Maximum adversary count for which no pair of inconsistent
    confirmations between the two clients is possible: q_k + q_k' - n - 1."""
    return pk.quorum + pk2.quorum - n - 1
