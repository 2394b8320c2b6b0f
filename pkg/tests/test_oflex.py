"""Permalock dynamics and the flexible confirmation rule."""

from oflexlab.core import GENESIS, GENESIS_ID, ClientPolicy, is_descendant, make_block
from oflexlab.forensics import _blocks_from_trace
from oflexlab.harness import audit, run_scenario
from oflexlab.netsim import ScenarioConfig
from oflexlab.oflex_streamlet import (
    Permalock,
    confirm_oflex,
    maybe_update_permalock,
    on_proposal_oflex,
)
from oflexlab.streamlet import ChainView, confirm_streamlet

from test_streamlet import grow, notarized_chain


class TestPermalock:
    def test_initial_lock_is_genesis(self):
        assert Permalock().locked == GENESIS_ID

    def test_lock_moves_to_triple_middle(self):
        view = ChainView(6)
        blocks = notarized_chain(view, 1, 2, 3)
        lock = maybe_update_permalock(view, Permalock())
        assert lock.locked == blocks[1].id

    def test_lock_only_moves_on_strict_descent(self):
        view = ChainView(6)
        blocks = notarized_chain(view, 1, 2, 3)
        lock = Permalock(locked=blocks[1].id)
        # A conflicting (deeper) pattern on another branch must not move it.
        notarized_chain(view, 2, 3, 4, 5, parent=GENESIS)
        assert maybe_update_permalock(view, lock).locked == blocks[1].id

    def test_lock_does_not_move_to_itself(self):
        view = ChainView(6)
        blocks = notarized_chain(view, 1, 2, 3)
        lock = Permalock(locked=blocks[1].id)
        assert maybe_update_permalock(view, lock) is lock

    def test_lock_advances_down_its_own_chain(self):
        view = ChainView(6)
        blocks = notarized_chain(view, 1, 2, 3)
        lock = maybe_update_permalock(view, Permalock())
        notarized_chain(view, 4, 5, parent=blocks[-1])
        lock = maybe_update_permalock(view, lock)
        # deepest triple is now (3,4,5); its middle is the epoch-4 block
        assert view.blocks[lock.locked].epoch == 4

    def test_vote_rule_respects_lock(self):
        view = ChainView(6)
        main = notarized_chain(view, 1, 2, 3)
        fork = notarized_chain(view, 4, 5, 6, parent=GENESIS)
        lock = Permalock(locked=main[1].id)
        good = make_block(main[-1], 7, ("tx",), 0)
        bad = make_block(fork[-1], 7, ("tx",), 0)
        assert on_proposal_oflex(0, good, view, lock) == good.id
        assert on_proposal_oflex(0, bad, view, lock) is None


class TestConfirmOflex:
    def test_needs_heavy_strict_descendant_of_the_triple(self):
        view = ChainView(6)
        blocks = notarized_chain(view, 1, 2, 3)
        # without any block beyond the triple, nothing confirms
        assert confirm_oflex(view, 5) == ()
        grow(view, blocks[-1], 4, ("tx4",), voters=range(5))
        assert confirm_oflex(view, 5) == ("tx1", "tx2")
        assert confirm_oflex(view, 6) == ()

    def test_heavy_top_itself_does_not_count(self):
        view = ChainView(6)
        notarized_chain(view, 1, 2, 3)  # top has 6 votes but no child
        assert confirm_oflex(view, 6) == ()

    def test_descendant_may_be_deeper_than_a_child(self):
        view = ChainView(6)
        blocks = notarized_chain(view, 1, 2, 3)
        mid = grow(view, blocks[-1], 4, ("tx4",), voters=range(3))
        grow(view, mid, 5, ("tx5",), voters=range(6))
        assert confirm_oflex(view, 6) == ("tx1", "tx2")

    def test_flex_confirmation_trails_baseline_by_one_block(self):
        from oflexlab.core import is_prefix

        view = ChainView(6)
        notarized_chain(view, 1, 2, 3, 4, 5)
        flex = confirm_oflex(view, 6)
        base = confirm_streamlet(view)
        assert flex == ("tx1", "tx2", "tx3")
        assert base == ("tx1", "tx2", "tx3", "tx4")
        assert is_prefix(flex, base)


class TestLockDiscipline:
    def collect_locks(self, trace):
        locks = {}
        for r in trace.events("lock-update"):
            locks.setdefault(r["actor"], []).append(r["block_id"])
        return locks

    def test_honest_locks_form_descending_chains(self):
        from oflexlab.adversary import split_brain

        strategy, cfg = split_brain(6, 1, 1)
        tr = run_scenario(cfg)
        blocks = _blocks_from_trace(tr)
        blocks[GENESIS_ID] = GENESIS
        honest = set(range(6)) - set(strategy.controlled)
        locks = self.collect_locks(tr)
        assert any(rid in locks for rid in honest)
        for rid in honest:
            seq = [GENESIS_ID] + locks.get(rid, [])
            for prev, new in zip(seq, seq[1:]):
                assert new != prev
                assert is_descendant(new, prev, blocks)

    def test_honest_votes_descend_from_held_lock(self):
        for seed in range(4):
            cfg = ScenarioConfig(
                n=6, horizon=48, delta=2, seed=seed,
                protocol="oflex-streamlet",
                clients=[ClientPolicy.from_quorum("c", 6, 5)],
                injections=[(0, "tx1")],
                adversary={"name": "random_byzantine",
                           "controlled": [4, 5], "seed": seed},
            )
            tr = run_scenario(cfg)
            blocks = _blocks_from_trace(tr)
            blocks[GENESIS_ID] = GENESIS
            locks = {rid: [GENESIS_ID] for rid in range(4)}
            events = sorted(
                (r for r in tr.records
                 if r["kind"] in ("vote", "lock-update") and r["actor"] in locks),
                key=lambda r: (r["tick"],),
            )
            # trace order within a tick preserves per-replica causality
            for r in (x for x in tr.records if x.get("actor") in locks):
                if r["kind"] == "lock-update":
                    locks[r["actor"]].append(r["block_id"])
                elif r["kind"] == "vote":
                    held = locks[r["actor"]][-1]
                    assert is_descendant(r["block_id"], held, blocks)
            assert events  # the scenario actually exercised the rule


class TestLiveness:
    def test_post_gst_confirmation_window(self):
        # With an all-honest network from tick 0, a transaction present at
        # the start of epoch 1 is confirmed by every client before epoch 7.
        cfg = ScenarioConfig(
            n=6, horizon=96, delta=4, seed=0, protocol="oflex-streamlet",
            clients=[ClientPolicy.from_quorum("q5", 6, 5),
                     ClientPolicy.from_quorum("q6", 6, 6)],
            injections=[(0, "tx1")],
        )
        tr = run_scenario(cfg)
        deadline = 6 * 2 * cfg.delta  # start of epoch 7
        for name in ("q5", "q6"):
            ticks = [r["tick"] for r in tr.events("confirm")
                     if r["actor"] == name and "tx1" in r["log"]]
            assert ticks and min(ticks) < deadline

    def test_audit_reports_no_misses_for_honest_run(self):
        cfg = ScenarioConfig(
            n=6, horizon=96, delta=4, seed=2, protocol="oflex-streamlet",
            clients=[ClientPolicy.from_quorum("q6", 6, 6)],
            injections=[(0, "tx1"), (20, "tx2")],
        )
        report = audit(run_scenario(cfg))
        assert report.safety_violations == []
        assert report.liveness_misses == []
