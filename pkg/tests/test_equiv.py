import pytest

from conftest import N1, N2, N3, kripke_as_lts, kripke_cases, lts_cases
from stutterbisim.equiv import (DEFAULT_NAIVE_CAP, NAIVE_CAP_ENV, Engine, Equivalence,
                                EquivalenceMismatch, InvalidStateError, NaiveCapExceeded,
                                classes_of, compare, metrics_row, naive_cap_from_env, reduce)
from stutterbisim.generate import tau_sequence, tau_tree
from stutterbisim.model import KripkeStructure, Lts
from stutterbisim.naive import branching_bisim_relational
from stutterbisim.preprocess import DIV, add_divergence_loops


def ks(n, trans, labels):
    props = sorted({p for lab in labels for p in lab})
    return KripkeStructure(n, tuple(props), tuple(trans), tuple(frozenset(lab) for lab in labels))


class TestEquivalenceNames:
    @pytest.mark.parametrize("raw,want", [
        ("dbs", Equivalence.DBS), ("stutter", Equivalence.STUTTERING),
        ("stuttering", Equivalence.STUTTERING), ("branching", Equivalence.BRANCHING),
        ("branching-div", Equivalence.BRANCHING_DIVERGENCE),
        (Equivalence.BRANCHING, Equivalence.BRANCHING),
    ])
    def test_parse(self, raw, want):
        assert Equivalence.parse(raw) is want

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown equivalence"):
            Equivalence.parse("weak")


class TestReduceExamples:
    @pytest.mark.parametrize("n", [1, 2, 8, 33])
    def test_tau_sequence_becomes_a_chain(self, n):
        result = reduce(tau_sequence(n), "branching")
        q = result.quotient
        assert q.n_states == n + 1 and q.n_transitions == n
        assert all(q.actions[a] == "a" for _, a, _ in q.transitions)
        assert result.n_classes == n + 1

    def test_tau_sequence_matches_relational(self):
        for n in (1, 3, 6):
            lts = tau_sequence(n)
            assert reduce(lts, "branching").classes == branching_bisim_relational(lts)

    def test_same_label_cycle_is_one_state(self):
        k = ks(3, [(0, 1), (1, 2), (2, 0)], [{"p"}] * 3)
        for eq in ("dbs", "stuttering"):
            q = reduce(k, eq).quotient
            assert q.n_states == 1 and q.transitions == ((0, 0),)

    def test_stuttering_separates_divergence(self):
        # 0 loops before moving on, 1 moves on at once
        k = ks(3, [(0, 0), (0, 2), (1, 2), (2, 2)], [{"p"}, {"p"}, {"q"}])
        assert reduce(k, "dbs").classes.same(0, 1)
        assert not reduce(k, "stuttering").classes.same(0, 1)

    def test_branching_divergence_separates_tau_loop(self):
        lts = Lts.from_named(3, [(0, "tau", 0), (0, "a", 2), (1, "a", 2)])
        assert reduce(lts, "branching").classes.same(0, 1)
        result = reduce(lts, "branching-divergence")
        assert not result.classes.same(0, 1)
        assert DIV not in result.quotient.actions
        assert (0, 0, 0) in result.quotient.transitions

    def test_tau_tree_leaves(self):
        lts = tau_tree(4)
        q = reduce(lts, "branching").quotient
        # every internal node offers a different set of leaf actions, so only
        # the deadlocked leaves merge
        assert q.n_states == (2 ** 4 - 1) + 1
        assert q.n_transitions == lts.n_transitions

    def test_initial_state_follows_its_class(self):
        lts = Lts.from_named(3, [(0, "tau", 1), (1, "a", 2)], initial=1)
        assert reduce(lts, "branching").quotient.initial == 0


class TestEngineAgreement:
    def test_kripke(self):
        for k in kripke_cases(41, 150, max_n=30):
            for eq in ("dbs", "stuttering"):
                assert reduce(k, eq).classes == reduce(k, eq, "naive").classes

    def test_lts(self):
        for lts in lts_cases(42, 150, max_n=25):
            for eq in ("branching", "branching-divergence"):
                assert reduce(lts, eq).classes == reduce(lts, eq, "naive").classes


class TestOracles:
    def test_dbs_matches_branching_of_encoding(self):
        for k in kripke_cases(43, 150, max_n=20):
            assert classes_of(k, "dbs")[0] == branching_bisim_relational(kripke_as_lts(k))

    def test_stuttering_matches_divergent_encoding(self):
        for k in kripke_cases(44, 150, max_n=20):
            oracle = branching_bisim_relational(add_divergence_loops(kripke_as_lts(k, True)))
            assert classes_of(k, "stuttering")[0] == oracle

    def test_branching_divergence_matches_relational_with_loops(self):
        for lts in lts_cases(45, 150, max_n=20):
            oracle = branching_bisim_relational(add_divergence_loops(lts))
            assert classes_of(lts, "branching-divergence")[0] == oracle


class TestQuotients:
    def test_idempotent(self):
        for k in kripke_cases(46, 80, max_n=30):
            for eq in ("dbs", "stuttering"):
                q = reduce(k, eq).quotient
                assert reduce(q, eq).quotient == q
        for lts in lts_cases(47, 80, max_n=30):
            for eq in ("branching", "branching-divergence"):
                q = reduce(lts, eq).quotient
                assert reduce(q, eq).quotient == q

    def test_quotient_size_matches_classes(self):
        for lts in lts_cases(48, 50):
            result = reduce(lts, "branching")
            assert result.quotient.n_states == result.n_classes

    def test_sound_against_relational_oracle(self):
        # each state is branching bisimilar to its class's quotient state
        for lts in lts_cases(49, 60, max_n=15):
            result = reduce(lts, "branching")
            reps = sorted(set(result.classes.class_of))
            q = result.quotient
            shift = lts.n_states
            union = Lts(shift + q.n_states, lts.actions,
                        lts.transitions + tuple((s + shift, a, t + shift) for s, a, t in q.transitions))
            oracle = branching_bisim_relational(union)
            for s in range(lts.n_states):
                assert oracle.same(s, shift + reps.index(result.classes.class_of[s]))

    def test_kripke_quotient_keeps_totality(self):
        k = ks(2, [(0, 1), (1, 1)], [{"p"}, {"p"}])
        q = reduce(k, "dbs").quotient
        assert q.n_states == 1 and q.transitions == ((0, 0),)


class TestCompare:
    def test_reflexive(self, three_way):
        for s in range(three_way.n_states):
            assert compare(three_way, "dbs", s, s)

    def test_three_way_block_members_differ(self, three_way):
        assert not compare(three_way, "dbs", N1, N2)
        assert not compare(three_way, "dbs", N2, N3)

    def test_agrees_with_relational(self):
        for lts in lts_cases(50, 40, max_n=12):
            oracle = branching_bisim_relational(lts)
            for s in range(lts.n_states):
                for t in range(lts.n_states):
                    assert compare(lts, "branching", s, t) == oracle.same(s, t)

    @pytest.mark.parametrize("bad", [-1, 6, 100, True, 1.0])
    def test_bad_ids(self, three_way, bad):
        with pytest.raises(InvalidStateError):
            compare(three_way, "dbs", 0, bad)


class TestErrors:
    def test_branching_needs_lts(self, three_way):
        with pytest.raises(EquivalenceMismatch):
            reduce(three_way, "branching")

    def test_stuttering_needs_kripke(self):
        with pytest.raises(EquivalenceMismatch):
            reduce(tau_sequence(1), "stuttering")

    def test_naive_cap(self):
        with pytest.raises(NaiveCapExceeded, match="cap 5"):
            reduce(tau_sequence(10), "branching", engine="naive", naive_cap=5)

    def test_naive_cap_from_env(self, monkeypatch):
        monkeypatch.delenv(NAIVE_CAP_ENV, raising=False)
        assert naive_cap_from_env() == DEFAULT_NAIVE_CAP
        monkeypatch.setenv(NAIVE_CAP_ENV, "7")
        assert naive_cap_from_env() == 7
        with pytest.raises(NaiveCapExceeded):
            reduce(tau_sequence(10), "branching", engine="naive")

    def test_div_is_reserved(self):
        lts = Lts.from_named(1, [(0, "div", 0)])
        with pytest.raises(ValueError, match="reserved"):
            reduce(lts, "branching-divergence")
        assert reduce(lts, "branching").n_classes == 1


def test_metrics_row():
    lts = tau_sequence(4)
    result = reduce(lts, "branching")
    row = metrics_row("atau_4", lts, result, 0.25)
    assert row == {"name": "atau_4", "n": 9, "m": 8, "min_n": 5, "min_m": 4,
                   "engine": "fast", "seconds": "0.250000"}


def test_stats_are_reported():
    result = reduce(tau_sequence(16), "branching", record=True)
    stats = result.stats
    assert stats.kripke_states == 33 + 16
    assert stats.episodes == len(stats.trace) > 0
    assert stats.work > 0
    assert result.engine is Engine.FAST
