"""Post-hoc blame assignment from execution traces.

Two detectors, each producing transferable proof objects (pairs of authored
messages plus chain evidence) that can be re-verified against the trace
alone:

* gadget equivocation — a replica authored two prefix-incomparable ovote
  logs; honest lock discipline makes every honest replica's ovotes a chain.
* chain-protocol betrayal — a replica voted for a block whose strict parent
  chain contains three adjacent consecutive-epoch blocks A,B,C (which, for
  an honest permalock replica, proves it had locked B or deeper at that
  point) and then, in the same or a later epoch, voted for a block
  inconsistent with B.  The rule presupposes a permalock-rule trace:
  applied to a baseline-rule trace it would accuse replicas whose votes
  were legitimate there.

Accusations require the voted block's full parent chain to be
reconstructible from the trace; votes referencing unresolvable chains are
skipped rather than guessed about.
"""
from __future__ import annotations

from typing import Optional

from .core import GENESIS, GENESIS_ID, Block, is_prefix
from .netsim import Trace


def _blocks_from_trace(trace: Trace) -> dict:
    blocks = {GENESIS_ID: GENESIS}
    for rec in trace.records:
        blk = None
        if rec.get("kind") == "send" and rec.get("msg_kind") == "proposal":
            blk = Block.from_json(rec["msg"]["block"])
        elif rec.get("kind") == "propose":
            blk = Block.from_json(rec["block"])
        if blk is not None and blk.id not in blocks:
            blocks[blk.id] = blk
    return blocks


def _authored_votes(trace: Trace) -> dict:
    """voter -> ordered list of (msg_ref, block_id) from authored vote
    messages (send records when present, machine vote records otherwise)."""
    votes: dict = {}
    seen_msg: set = set()
    have_network = any(rec.get("kind") == "send" for rec in trace.records)
    for rec in trace.records:
        if have_network:
            if rec.get("kind") != "send" or rec.get("msg_kind") != "vote":
                continue
            if rec["msg_id"] in seen_msg:
                continue
            seen_msg.add(rec["msg_id"])
            voter = rec["msg"]["voter"]
            entry = (f"msg:{rec['msg_id']}", rec["msg"]["block_id"])
        else:
            if rec.get("kind") != "vote":
                continue
            voter = rec["actor"]
            entry = (f"vote@{rec['tick']}:{rec['actor']}", rec["block_id"])
        votes.setdefault(voter, []).append(entry)
    return votes


def _authored_ovotes(trace: Trace) -> dict:
    """voter -> ordered list of (msg_ref, log tuple) from authored ovotes."""
    ovotes: dict = {}
    seen_msg: set = set()
    have_network = any(rec.get("kind") == "send" for rec in trace.records)
    for rec in trace.records:
        if have_network:
            if rec.get("kind") != "send" or rec.get("msg_kind") != "ovote":
                continue
            if rec["msg_id"] in seen_msg:
                continue
            seen_msg.add(rec["msg_id"])
            voter = rec["msg"]["voter"]
            entry = (f"msg:{rec['msg_id']}", tuple(rec["msg"]["log"]))
        else:
            if rec.get("kind") != "ovote":
                continue
            voter = rec["actor"]
            entry = (f"ovote@{rec['tick']}:{rec['actor']}", tuple(rec["log"]))
        ovotes.setdefault(voter, []).append(entry)
    return ovotes


def detect_gadget_equivocation(trace: Trace) -> dict:
    """Replicas that authored two prefix-incomparable ovote logs, each with
    the offending message pair as proof.  A replica whose ovotes form a
    chain is never included."""
    accused: dict = {}
    for voter, entries in sorted(_authored_ovotes(trace).items()):
        for i in range(len(entries)):
            ref_a, log_a = entries[i]
            for ref_b, log_b in entries[i + 1 :]:
                if not (is_prefix(log_a, log_b) or is_prefix(log_b, log_a)):
                    accused[voter] = {
                        "rule": "gadget-equivocation",
                        "evidence": [ref_a, ref_b],
                        "logs": [list(log_a), list(log_b)],
                    }
                    break
            if voter in accused:
                break
    return accused


def _chain_ids(block_id: str, blocks: dict) -> Optional[list]:
    """Genesis-to-block id chain, or None if any link is missing."""
    out = []
    cur = block_id
    while cur is not None:
        if cur not in blocks:
            return None
        out.append(cur)
        cur = blocks[cur].parent
    out.reverse()
    return out


def _deepest_lock_proof(block_id: str, blocks: dict) -> Optional[tuple]:
    """The deepest adjacent consecutive-epoch triple among the STRICT
    ancestors of `block_id`; returns (middle_id, chain ids) or None."""
    chain = _chain_ids(block_id, blocks)
    if chain is None:
        return None
    ancestors = chain[:-1]
    best: Optional[str] = None
    for i in range(2, len(ancestors)):
        a, b, c = (blocks[ancestors[i - 2]], blocks[ancestors[i - 1]], blocks[ancestors[i]])
        if a.id == GENESIS_ID:
            continue
        if c.epoch == b.epoch + 1 and b.epoch == a.epoch + 1:
            best = b.id
    if best is None:
        return None
    return best, ancestors


def _consistent(x_id: str, y_id: str, blocks: dict) -> Optional[bool]:
    cx = _chain_ids(x_id, blocks)
    cy = _chain_ids(y_id, blocks)
    if cx is None or cy is None:
        return None
    return x_id in cy or y_id in cx


def detect_streamlet_betrayal(trace: Trace) -> dict:
    """Replicas that provably voted against a lock they must have held:
    a vote v1 on a block whose strict parent chain contains an adjacent
    consecutive-epoch triple with middle B, plus a vote v2 in the same or a
    later epoch for a block inconsistent with B."""
    blocks = _blocks_from_trace(trace)
    accused: dict = {}
    for voter, entries in sorted(_authored_votes(trace).items()):
        found = None
        for ref1, bid1 in entries:
            if bid1 not in blocks:
                continue
            proof = _deepest_lock_proof(bid1, blocks)
            if proof is None:
                continue
            lock_mid, chain = proof
            epoch1 = blocks[bid1].epoch
            for ref2, bid2 in entries:
                if ref2 == ref1 or bid2 not in blocks:
                    continue
                if blocks[bid2].epoch < epoch1:
                    continue
                consistent = _consistent(bid2, lock_mid, blocks)
                if consistent is False:
                    found = {
                        "rule": "permalock-betrayal",
                        "evidence": [ref1, ref2],
                        "locked_block": lock_mid,
                        "chain": chain,
                    }
                    break
            if found:
                break
        if found:
            accused[voter] = found
    return accused


def blame_report(trace: Trace) -> list:
    """Newline-delimited-ready blame records for both rules, scoped by the
    trace's protocol (the betrayal rule only applies to permalock traces)."""
    protocol = trace.meta.get("protocol", "")
    records = []
    if protocol == "gadget":
        detected = detect_gadget_equivocation(trace)
    elif protocol == "oflex-streamlet":
        detected = detect_streamlet_betrayal(trace)
    else:
        detected = {}
    for rid, proof in sorted(detected.items()):
        records.append({"replica": rid, **proof})
    return records
