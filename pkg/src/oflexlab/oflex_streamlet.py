"""Permalock-extended replica rule and the flexible client confirmation rule.

Replicas run the baseline protocol with one extra constraint: each replica
keeps a permanent lock (initially genesis) that only ever moves to a strict
descendant — the deepest middle block of an adjacent consecutive-epoch
triple on a notarized chain — and refuses to vote for any block that does
not descend from the lock.

A client with quorum q_k confirms the deepest block B such that a notarized
chain contains adjacent consecutive-epoch blocks A, B, C and some STRICT
descendant D of C holds >= q_k distinct votes in the client's view.  The
extra block D is what tells the client that q_k replicas locked B (or
deeper) before voting beyond C.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import GENESIS_ID, Block, Log, chain_to_log, is_descendant
from .streamlet import (
    ChainView,
    StreamletCore,
    _deepest_middles,
    deepest_lock_candidate,
    proposal_vote_ok,
)


@dataclass
class Permalock:
    """A replica's permanent commitment; updates are strict descents only."""

    locked: str = GENESIS_ID


def maybe_update_permalock(view: ChainView, lock: Permalock) -> Permalock:
    """Move the lock to the deepest triple-middle that strictly extends it,
    if any; otherwise return it unchanged."""
    candidate = deepest_lock_candidate(view, lock.locked)
    if candidate is None:
        return lock
    return Permalock(locked=candidate)


def on_proposal_oflex(
    replica: int, block: Block, view: ChainView, lock: Permalock
) -> Optional[str]:
    """Vote decision: the baseline structural condition AND descent from the
    lock.  Returns the block id to vote for, or None."""
    if proposal_vote_ok(block, view, lock.locked):
        return block.id
    return None


def oflex_qualifying_middles(view: ChainView, q_k: int) -> list:
    heavy = [
        bid
        for bid, voters in view.votes.items()
        if len(voters) >= q_k and bid in view.blocks and bid != GENESIS_ID
    ]

    def ok(triple) -> bool:
        _h, _mid, top = triple
        for d in heavy:
            if d != top and is_descendant(d, top, view.blocks):
                return True
        return False

    return _deepest_middles(view, ok)


def confirm_oflex(view: ChainView, q_k: int) -> Log:
    """Log of the deepest confirmable block under the flexible rule with
    client quorum q_k; empty log if none qualifies."""
    mids = oflex_qualifying_middles(view, q_k)
    if not mids:
        return ()
    return chain_to_log(mids[0], view.blocks)


def make_oflex_core(rid: int, n: int, delta: int, leader_fn) -> StreamletCore:
    """A replica core running the lock-constrained voting rule."""
    return StreamletCore(rid, n, delta, leader_fn, lock_rule=True)
