import math

import pytest

from conftest import N1, N2, N3, N4, N5, SINK, three_way_system, kripke_cases
from stutterbisim.fast import FastRefiner, InvariantError, StateLinks, StateList, run_refinement
from stutterbisim.model import KripkeStructure
from stutterbisim.naive import Graph, is_unstable, split_set, stabilize_naive
from stutterbisim.preprocess import contract_sccs


def ks(n, trans, labels):
    props = sorted({p for lab in labels for p in lab})
    return KripkeStructure(n, tuple(props), tuple(trans), tuple(frozenset(lab) for lab in labels))


def finish(gen):
    """Drive a detector generator to its end and return its result."""
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value


def renumber(k, order):
    """``k`` with state ``order[i]`` renamed to ``i``."""
    new = {old: i for i, old in enumerate(order)}
    trans = sorted((new[s], new[t]) for s, t in k.transitions)
    labels = [k.labels[old] for old in order]
    return KripkeStructure(k.n_states, k.ap, tuple(trans), tuple(labels))


# the three-way example with C = {n4, sink} listed first, so the first splitter is C
THREE_WAY_C_FIRST = [N4, N1, N2, N3, N5, SINK]
C_N4, C_N1, C_N2, C_N3, C_N5, C_SINK = range(6)


class TestStateList:
    def test_add_remove_iterate(self):
        links = StateLinks(6)
        a = StateList(links)
        for s in (4, 1, 3, 0):
            a.add(s)
        a.remove(4)
        a.remove(3)
        assert list(a) == [1, 0] and len(a) == 2
        assert 1 in a and 4 not in a
        a.remove(1)
        a.remove(0)
        assert list(a) == [] and not a and a.head == a.tail == -1

    def test_extend_moves_ownership(self):
        links = StateLinks(5)
        a, b = StateList(links), StateList(links)
        a.add(0)
        for s in (3, 2):
            b.add(s)
        a.extend(b)
        assert list(a) == [0, 3, 2] and len(b) == 0 and list(b) == []
        assert 3 in a and 3 not in b
        a.remove(2)
        assert a.tail == 3 and list(a) == [0, 3]

    def test_removing_the_current_state_while_iterating(self):
        links = StateLinks(4)
        a = StateList(links)
        for s in range(4):
            a.add(s)
        seen = []
        for s in a:
            seen.append(s)
            a.remove(s)
        assert seen == [0, 1, 2, 3] and not a

    def test_iteration_ignores_removed_prefix(self):
        # a dict that lost most of its keys still scans the dead slots
        links = StateLinks(100_000)
        a = StateList(links)
        for s in range(100_000):
            a.add(s)
        for s in range(99_999):
            a.remove(s)
        assert a.head == 99_999 and next(iter(a)) == 99_999


class TestInit:
    def test_single_label_is_trivially_stable(self):
        k = ks(3, [(0, 1), (1, 2), (2, 2)], [{"p"}] * 3)
        f = FastRefiner(k, debug=True)
        assert len(f.nontrivial) == 0 and len(f.trivial) == 1
        assert f.run().n_classes == 1
        assert f.episodes == 0 and f.splits == 0

    def test_two_labels_share_one_constellation(self):
        k = ks(3, [(0, 1), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k)
        assert len(f.nontrivial) == 1
        c0 = f.nontrivial.head
        assert c0.nblocks == 2 and c0.size == 3
        f.check(quiescent=True)

    def test_three_way_counters(self, three_way):
        f = FastRefiner(three_way, debug=True)
        c0 = f.nontrivial.head
        assert [sorted(b.states()) for b in c0.blocks()] == [[N5], [N1, N2, N3], [N4, SINK]]
        counts = {f.tcnt[t] for t in f.out[N2]}
        assert len(counts) == 1 and counts.pop().value == 3
        assert f.inert[N1] == 1 and f.inert[N2] == 1 and f.inert[N3] == 0

    def test_self_loops_are_ignored(self):
        k = ks(2, [(0, 0), (0, 1), (1, 1)], [{"p"}, {"q"}])
        f = FastRefiner(k)
        assert f.m == 1


class TestSelectSplitter:
    def test_takes_the_block_within_half(self):
        k = ks(4, [(0, 1), (1, 2), (2, 3), (3, 3)], [{"p"}, {"p"}, {"p"}, {"q"}])
        f = FastRefiner(k, debug=True)
        blk, big, small = f.select_splitter()
        assert sorted(blk.states()) == [3]
        assert blk.constln is small and small.size == 1 and big.size == 3
        assert big in f.trivial and small in f.trivial

    def test_equal_halves_take_the_first(self):
        k = ks(4, [(0, 1), (1, 2), (2, 3), (3, 3)], [{"p"}, {"p"}, {"q"}, {"q"}])
        f = FastRefiner(k)
        blk, _, _ = f.select_splitter()
        assert sorted(blk.states()) == [0, 1]

    def test_done_when_all_trivial(self):
        k = ks(2, [(0, 1), (1, 1)], [{"p"}, {"p"}])
        assert FastRefiner(k).select_splitter() is None


class TestMarkAndDetect:
    def test_three_way_split_under_c(self):
        f = FastRefiner(renumber(three_way_system(), THREE_WAY_C_FIRST), debug=True)
        splitter, big, small = f.select_splitter()
        assert sorted(splitter.states()) == [C_N4, C_SINK]
        result = f.mark_and_detect(splitter, big, small)
        bprime = f.block[C_N1]
        assert bprime in result
        assert set(bprime.mrkd_non_btm or ()) | set(bprime.mrkd_btm or ()) == {C_N1, C_N2}
        assert set(bprime.btm) == {C_N3}
        assert [f.src[t] for t in f.transitions(bprime.c_ref)] != []
        assert {f.src[t] for t in f.transitions(bprime.c_ref)} == {C_N1, C_N2}

    def test_stable_block_is_unmarked(self):
        # 1 reaches both 0 (the splitter) and 2 (the rest of the constellation)
        k = ks(3, [(0, 0), (1, 0), (1, 2), (2, 2)], [{"q"}, {"p"}, {"r"}])
        f = FastRefiner(k, debug=True)
        splitter, big, small = f.select_splitter()
        assert sorted(splitter.states()) == [0]
        assert f.mark_and_detect(splitter, big, small) == []
        blk = f.block[1]
        assert not f.marked[1] and blk.mrkd_btm is None and blk.c_ref is None
        assert f.cocnt[1] is None

    def test_marking_work_is_local(self):
        for k in kripke_cases(31, 40, max_n=30):
            c = contract_sccs(k).contracted
            f = FastRefiner(c)
            while True:
                chosen = f.select_splitter()
                if chosen is None:
                    break
                splitter = chosen[0]
                states = list(splitter.states())
                degree = sum(len(f.inc[s]) + len(f.out[s]) for s in states)
                before = f.work
                blocks = f.mark_and_detect(*chosen)
                touched = {f.block[f.src[t]] for s in states for t in f.inc[s]} | {splitter}
                # one pass over the edges, plus checking and unmarking the
                # marked states, which are at most one per incoming edge
                assert f.work - before <= 3 * degree + len(touched) + 2 * len(states)
                for bp in blocks:
                    f._split_block(bp, chosen[1])


class TestDetectors:
    def test_detect1_without_inert_edges(self):
        k = ks(3, [(0, 2), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k)
        blk = f.block[0]
        assert finish(f.detect1(blk, [0], 1)) == [0]

    def test_detect1_aborts_past_half(self):
        k = ks(4, [(0, 1), (1, 2), (2, 3), (3, 3)], [{"p"}] * 3 + [{"q"}])
        f = FastRefiner(k)
        blk = f.block[0]
        assert finish(f.detect1(blk, [2], blk.size // 2)) is None
        assert sorted(finish(f.detect1(blk, [2], 3))) == [0, 1, 2]

    def test_detect1_whole_block_seeded(self):
        k = ks(3, [(0, 2), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k)
        assert finish(f.detect1(f.block[0], [0, 1], 1)) is None

    def test_detect2_single_bottom(self):
        k = ks(3, [(0, 2), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k)
        assert finish(f.detect2(f.block[0], [1], 1, lambda p: False)) == [1]

    def test_detect2_waits_for_all_inert_successors(self):
        # 0 has inert steps to the bottoms 1 and 2
        k = ks(4, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 3)], [{"p"}] * 3 + [{"q"}])
        f = FastRefiner(k)
        blk = f.block[0]
        assert finish(f.detect2(blk, [1, 2], 3, lambda p: False)) == [1, 2, 0]
        assert finish(f.detect2(blk, [1], 3, lambda p: False)) == [1]

    def test_detect2_respects_exclusion(self):
        k = ks(4, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 3)], [{"p"}] * 3 + [{"q"}])
        f = FastRefiner(k)
        assert finish(f.detect2(f.block[0], [1, 2], 3, lambda p: p == 0)) == [1, 2]


class TestLockstep:
    def test_tie_goes_to_detect1(self):
        k = ks(3, [(0, 2), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k)
        assert f.lockstep(f.block[0], [0], [1], lambda p: False) == (1, [0])

    def test_smaller_side_wins(self):
        # chain 0 -> 1 -> 2 with marked bottom 2, lone bottom 3
        k = ks(5, [(0, 1), (1, 2), (2, 4), (3, 4), (4, 4)], [{"p"}] * 4 + [{"q"}])
        f = FastRefiner(k)
        blk = f.block[0]
        side, states = f.lockstep(blk, [2], [3], lambda p: False)
        assert (side, states) == (2, [3])
        assert set(range(4)) - set(states) == split_set(range(4), {2}, k)

    def test_balanced_chains(self):
        k = ks(5, [(0, 1), (1, 4), (2, 3), (3, 4), (4, 4)], [{"p"}] * 4 + [{"q"}])
        f = FastRefiner(k)
        side, states = f.lockstep(f.block[0], [1], [3], lambda p: False)
        assert side == 1 and sorted(states) == [0, 1]

    def test_empty_cosplit(self):
        k = ks(3, [(0, 2), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k)
        assert f.lockstep(f.block[0], [0, 1], [], lambda p: False) == (2, [])

    def test_both_over_half_is_an_error(self):
        k = ks(3, [(0, 2), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k)
        with pytest.raises(InvariantError):
            f.lockstep(f.block[0], [0, 1], [0, 1], lambda p: False)


class TestExecuteSplit:
    def test_predecessor_becomes_bottom(self):
        # inert 1 -> 0; moving 0 out makes 1 a bottom state
        k = ks(3, [(0, 2), (1, 0), (2, 2)], [{"p"}, {"p"}, {"q"}])
        f = FastRefiner(k, debug=True)
        old = f.block[0]
        assert f.inert[1] == 1
        bottoms = {}
        new = f.execute_split(old, [0], bottoms)
        assert list(bottoms) == [1]
        assert f.inert[1] == 0 and 1 in old.btm
        assert f.block[0] is new and new.size == 1 and old.size == 1
        assert old.in_ref is not None and list(f.transitions(old.in_ref)) == [f.out[1][0]]
        f.check(quiescent=False)

    def test_touches_only_moved_states(self):
        k = ks(6, [(0, 1), (1, 2), (2, 5), (3, 4), (4, 5), (5, 5)], [{"p"}] * 5 + [{"q"}])
        f = FastRefiner(k, debug=True)
        before = f.work
        f.execute_split(f.block[0], [3, 4], {})
        moved_edges = sum(len(f.inc[s]) + len(f.out[s]) for s in (3, 4))
        assert f.work - before <= moved_edges + 2


class TestCoSplit:
    def test_no_coconstellation_transitions(self):
        k = ks(3, [(0, 0), (1, 0), (1, 2), (2, 2)], [{"q"}, {"p"}, {"r"}])
        f = FastRefiner(k)
        splitter, big, small = f.select_splitter()
        f.mark_and_detect(splitter, big, small)
        assert f.split_under_coconstellation(splitter, big, {}) is None

    def test_marked_bottoms_all_reach_rest(self):
        f = FastRefiner(renumber(three_way_system(), THREE_WAY_C_FIRST), debug=True)
        splitter, big, small = f.select_splitter()
        (bprime,) = [b for b in f.mark_and_detect(splitter, big, small) if b is not splitter]
        side, moving = f.lockstep(bprime, [C_N1, C_N2], list(bprime.btm), f._excluded_first(bprime))
        assert side == 2 and moving == [C_N3]
        bottoms = {}
        f.execute_split(bprime, moving, bottoms)
        assert sorted(bottoms) == [C_N1, C_N2]
        # n1 and n2 still reach n3, which stays in the old constellation
        assert f.split_under_coconstellation(bprime, big, bottoms) is None


class TestStabilizeNewBottoms:
    def test_nothing_to_do(self, three_way):
        f = FastRefiner(three_way, debug=True)
        before = f.partition()
        f.stabilize_new_bottoms([])
        assert f.partition() == before and f.splits == 0

    def test_three_way_new_bottom_split(self, three_way):
        f = FastRefiner(three_way, debug=True, record=True)
        f.step()
        part = f.partition()
        assert len({part.class_of[s] for s in (N1, N2, N3)}) == 3
        assert [e[1] for e in f.events] == ["cosplit", "bottom"]

    def test_split_order_does_not_matter(self):
        # with C first, n1 and n2 still reach both constellations after n3
        # leaves, so they separate only in a later episode
        k = renumber(three_way_system(), THREE_WAY_C_FIRST)
        f = FastRefiner(k, debug=True, record=True)
        f.step()
        part = f.partition()
        assert part.same(C_N1, C_N2) and not part.same(C_N1, C_N3)
        assert f.run() == stabilize_naive(k)
        assert [e[1] for e in f.events] == ["split", "split"]


class TestRun:
    def test_three_way_trace(self, three_way):
        f = FastRefiner(three_way, debug=True, record=True)
        part = f.run()
        assert part == stabilize_naive(three_way)
        assert len({part.class_of[s] for s in (N1, N2, N3)}) == 3
        assert f.trace[0] == "episode 0 0 2 2"
        assert [e[1] for e in f.events] == ["cosplit", "bottom"]
        assert all(line.startswith("episode ") and len(line.split()) == 5 for line in f.trace)

    def test_strongly_connected_single_label(self):
        k = ks(3, [(0, 1), (1, 2), (2, 0)], [{"p"}] * 3)
        part = run_refinement(contract_sccs(k).contracted)
        assert part.n_classes == 1

    def test_matches_naive(self):
        for i, k in enumerate(kripke_cases(32, 300)):
            c = contract_sccs(k).contracted
            assert run_refinement(c, debug=i < 40) == stabilize_naive(c)

    def test_stable_at_exit(self):
        for k in kripke_cases(33, 60, max_n=30):
            c = contract_sccs(k).contracted
            blocks = run_refinement(c).blocks()
            g = Graph.of(c)
            everything = set(range(c.n_states))
            for bp in blocks:
                for b in blocks:
                    assert not is_unstable(bp, b, c, g)
                    assert not is_unstable(bp, everything - set(b), c, g)

    def test_size_discipline(self):
        class Watched(FastRefiner):
            def select_splitter(self):
                chosen = super().select_splitter()
                if chosen is not None:
                    blk, big, _ = chosen
                    assert 2 * blk.size <= big.size + blk.size
                return chosen

            def lockstep(self, blk, seeds1, seeds2, excluded):
                side, states = super().lockstep(blk, seeds1, seeds2, excluded)
                assert len(states) <= blk.size // 2
                return side, states

        for k in kripke_cases(34, 200, max_n=60):
            c = contract_sccs(k).contracted
            f = Watched(c)
            assert f.run() == stabilize_naive(c)
            limit = math.floor(math.log2(max(c.n_states, 1))) + 1
            assert max(f.splitter_hits) <= limit
            assert max(f.winner_hits) <= limit
