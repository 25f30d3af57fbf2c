import numpy as np
import pytest

from clozerec.ensembling import (AlignmentError, EnsembleSpec,
                                 cross_type_ensemble, ensemble_scores,
                                 fuse_scored, table_from_predictions,
                                 table_from_scored)
from clozerec.evaluation import ScoredImpression, evaluate


def impression(imp_id, scores, labels):
    entries = tuple((f"N{i}", float(s), int(y))
                    for i, (s, y) in enumerate(zip(scores, labels)))
    return ScoredImpression(impression_id=imp_id, entries=entries)


def random_members(rng, n_members=3, n_impressions=6):
    members = []
    shapes = [(int(rng.integers(2, 7))) for _ in range(n_impressions)]
    labels = [rng.integers(0, 2, size=n).tolist() for n in shapes]
    for _ in range(n_members):
        member = []
        for k, n in enumerate(shapes):
            member.append(impression(f"imp{k}", rng.random(n), labels[k]))
        members.append(member)
    return members


class TestEnsembleScores:
    def test_single_member_identity(self):
        table = {("imp1", "N0"): 0.4, ("imp1", "N1"): 0.9}
        assert ensemble_scores([table]) == table

    def test_sum(self):
        a = {("imp1", "N0"): 0.6}
        b = {("imp1", "N0"): 0.7}
        assert ensemble_scores([a, b])[("imp1", "N0")] == pytest.approx(1.3)

    def test_key_mismatch_names_keys(self):
        a = {("imp1", "N0"): 0.6, ("imp1", "N1"): 0.1}
        b = {("imp1", "N0"): 0.7}
        with pytest.raises(AlignmentError, match="N1"):
            ensemble_scores([a, b])

    def test_commutative_associative(self):
        rng = np.random.default_rng(3)
        keys = [("imp1", f"N{i}") for i in range(5)]
        tables = [{k: float(rng.random()) for k in keys} for _ in range(3)]
        forward = ensemble_scores(tables)
        backward = ensemble_scores(tables[::-1])
        nested = ensemble_scores([ensemble_scores(tables[:2]), tables[2]])
        for key in keys:
            assert forward[key] == pytest.approx(backward[key], abs=1e-12)
            assert forward[key] == pytest.approx(nested[key], abs=1e-12)

    def test_weights(self):
        a = {("i", "N0"): 0.5}
        b = {("i", "N0"): 1.0}
        fused = ensemble_scores([a, b], weights=[2.0, 0.5])
        assert fused[("i", "N0")] == pytest.approx(1.5)


class TestFuseScored:
    def test_fused_ranking_equals_mean_ranking(self):
        rng = np.random.default_rng(11)
        members = random_members(rng)
        fused = fuse_scored(members)
        for k, imp in enumerate(fused):
            member_scores = np.array(
                [[e[1] for e in member[k].entries] for member in members])
            mean_rank = np.argsort(-member_scores.mean(axis=0),
                                   kind="stable")
            fused_scores = np.array([e[1] for e in imp.entries])
            fused_rank = np.argsort(-fused_scores, kind="stable")
            assert np.array_equal(fused_rank, mean_rank)

    def test_constant_member_preserves_ranking(self):
        rng = np.random.default_rng(5)
        members = random_members(rng, n_members=2)
        fused = fuse_scored(members)
        constant = [
            ScoredImpression(imp.impression_id,
                             tuple((cid, 0.37, label)
                                   for cid, _s, label in imp.entries))
            for imp in members[0]]
        fused_plus = fuse_scored(members + [constant])
        for a, b in zip(fused, fused_plus):
            rank_a = np.argsort([-e[1] for e in a.entries], kind="stable")
            rank_b = np.argsort([-e[1] for e in b.entries], kind="stable")
            assert np.array_equal(rank_a, rank_b)

    def test_label_disagreement_rejected(self):
        a = [impression("imp1", [0.5, 0.4], [1, 0])]
        b = [impression("imp1", [0.5, 0.4], [0, 1])]
        with pytest.raises(AlignmentError, match="label"):
            fuse_scored([a, b])

    def test_missing_candidate_rejected(self):
        a = [impression("imp1", [0.5, 0.4], [1, 0])]
        b = [ScoredImpression("imp1", (("N0", 0.5, 1),))]
        with pytest.raises(AlignmentError):
            fuse_scored([a, b])


class TestCrossType:
    def test_identical_members_reproduce_single_metrics(self):
        rng = np.random.default_rng(9)
        member = random_members(rng, n_members=1)[0]
        fused, report = cross_type_ensemble(
            {"discrete": member, "continuous": member, "hybrid": member})
        single = evaluate(member, keep_per_impression=False)
        assert report.auc == pytest.approx(single.auc, abs=1e-12)
        assert report.mrr == pytest.approx(single.mrr, abs=1e-12)
        assert report.ndcg5 == pytest.approx(single.ndcg5, abs=1e-12)
        assert report.ndcg10 == pytest.approx(single.ndcg10, abs=1e-12)
        for imp in fused:
            for _cid, score, _label in imp.entries:
                assert 0.0 < score < 3.0

    def test_requires_one_member_per_kind(self):
        rng = np.random.default_rng(1)
        member = random_members(rng, n_members=1)[0]
        with pytest.raises(ValueError, match="kind"):
            cross_type_ensemble({"discrete": member, "continuous": member})

    def test_ensemble_not_guaranteed_above_members(self):
        # documents the non-guarantee: fusion can land below the best member
        good = [impression("imp1", [0.9, 0.1], [1, 0])]
        bad = [impression("imp1", [0.1, 0.9], [1, 0])]
        worse = [impression("imp1", [0.1, 0.8], [1, 0])]
        _fused, report = cross_type_ensemble(
            {"discrete": good, "continuous": bad, "hybrid": worse})
        best_member = max(evaluate(m, keep_per_impression=False).auc
                          for m in (good, bad, worse))
        assert report.auc < best_member


class TestTables:
    def test_table_from_predictions(self):
        rows = [
            {"impression_id": "i1", "candidate_id": "N0", "p_pos": 0.25},
            {"impression_id": "i1", "candidate_id": "N1", "p_pos": 0.5},
        ]
        assert table_from_predictions(rows) == {
            ("i1", "N0"): 0.25, ("i1", "N1"): 0.5}

    def test_duplicate_key_rejected(self):
        rows = [{"impression_id": "i", "candidate_id": "N0", "p_pos": 0.1}]
        with pytest.raises(ValueError, match="duplicate"):
            table_from_predictions(rows * 2)

    def test_table_from_scored(self):
        imp = impression("i1", [0.3, 0.6], [0, 1])
        assert table_from_scored([imp]) == {
            ("i1", "N0"): 0.3, ("i1", "N1"): 0.6}


class TestEnsembleSpec:
    def test_valid(self):
        spec = EnsembleSpec(template_ids=("discrete-utility",
                                          "hybrid-action"),
                            checkpoints=("a", "b"))
        assert len(spec.template_ids) == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            EnsembleSpec(template_ids=(), checkpoints=())

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            EnsembleSpec(template_ids=("a", "a"), checkpoints=("x", "y"))

    def test_checkpoint_count_must_match(self):
        with pytest.raises(ValueError):
            EnsembleSpec(template_ids=("a", "b"), checkpoints=("x",))
