"""Metrics: accuracy, AUC vs pair-counting oracle, kappas, benefit rate."""

import numpy as np
import pytest

from pkengine.engine import LabelDistribution
from pkengine.errors import PkEngineError
from pkengine.metrics import (
    accuracy,
    auc_roc,
    cohen_kappa,
    evaluate,
    explanation_benefit_rate,
    fleiss_kappa,
)


def pair_counting_auc(scores, positives):
    """O(n^2) concordance oracle: ties count one half."""
    pos = [s for s, is_pos in zip(scores, positives) if is_pos]
    neg = [s for s, is_pos in zip(scores, positives) if not is_pos]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def dist(p, labels=("0", "1")):
    return LabelDistribution(probs={labels[0]: 1.0 - p, labels[1]: p})


class TestAccuracy:
    def test_identical(self):
        assert accuracy(["a", "b"], ["a", "b"]) == 1.0

    def test_three_of_four(self):
        assert accuracy(["a", "b", "c", "d"], ["a", "b", "c", "x"]) == 0.75

    def test_disjoint(self):
        assert accuracy(["a", "a"], ["b", "b"]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(PkEngineError, match="mismatch"):
            accuracy(["a"], ["a", "b"])


class TestAucRoc:
    def test_perfect_separation(self):
        scored = [(dist(0.9), "1"), (dist(0.8), "1"), (dist(0.2), "0"), (dist(0.1), "0")]
        assert auc_roc(scored) == 1.0

    def test_all_ties_is_half(self):
        scored = [(dist(0.5), "1"), (dist(0.5), "0"), (dist(0.5), "1"), (dist(0.5), "0")]
        assert auc_roc(scored) == 0.5

    def test_binary_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            n = int(rng.integers(2, 60))
            golds = rng.choice(["0", "1"], size=n)
            if len(set(golds)) < 2:
                continue
            ps = np.round(rng.uniform(0, 1, size=n), 2)  # rounding forces ties
            scored = [(dist(p), g) for p, g in zip(ps, golds)]
            expected = pair_counting_auc(ps, [g == "1" for g in golds])
            assert auc_roc(scored) == pytest.approx(expected, abs=1e-12)

    def test_macro_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(22)
        labels = ["x", "y", "z"]
        for _ in range(30):
            n = int(rng.integers(3, 50))
            golds = [labels[int(k)] for k in rng.integers(0, 3, size=n)]
            if len(set(golds)) < 3:
                continue
            dists = []
            for _ in range(n):
                raw = rng.uniform(0.01, 1, size=3)
                raw = np.round(raw / raw.sum(), 2)
                raw[2] = 1.0 - raw[0] - raw[1]
                dists.append(LabelDistribution(probs=dict(zip(labels, map(float, raw)))))
            expected = np.mean(
                [
                    pair_counting_auc([d.get(lab) for d in dists], [g == lab for g in golds])
                    for lab in sorted(set(golds))
                ]
            )
            got = auc_roc(list(zip(dists, golds)))
            assert got == pytest.approx(expected, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(23)
        ps = rng.uniform(0.05, 0.95, size=30)
        golds = rng.choice(["0", "1"], size=30)
        scored = [(dist(p), g) for p, g in zip(ps, golds)]
        transformed = [(dist(p**3), g) for p, g in zip(ps, golds)]  # strictly increasing
        assert auc_roc(scored) == pytest.approx(auc_roc(transformed), abs=1e-12)

    def test_gold_label_missing_from_support(self):
        scored = [(dist(0.5), "1"), (dist(0.4), "mystery")]
        with pytest.raises(PkEngineError, match="mystery"):
            auc_roc(scored)

    def test_needs_two_items(self):
        with pytest.raises(PkEngineError):
            auc_roc([(dist(0.5), "1")])

    def test_no_match_scores_zero(self):
        from pkengine.pk import NO_MATCH

        scored = [
            (LabelDistribution(probs={NO_MATCH: 1.0}), "1"),
            (dist(0.7), "1"),
            (dist(0.6), "0"),
        ]
        # NO_MATCH row has P("1") = 0, below both others
        expected = pair_counting_auc([0.0, 0.7, 0.6], [True, True, False])
        assert auc_roc(scored) == pytest.approx(expected, abs=1e-12)


class TestKappas:
    def test_unanimous_is_one(self):
        ratings = [["a", "a", "a"], ["b", "b", "b"], ["a", "a", "a"]]
        assert fleiss_kappa(ratings) == 1.0

    def test_single_category_everywhere_is_one(self):
        assert fleiss_kappa([["a", "a"], ["a", "a"]]) == 1.0

    def test_cohen_hand_computed_confusion_table(self):
        """Confusion ((20,5),(10,15)): po=0.70, pe=0.50, kappa=0.40."""
        rater_a, rater_b = [], []
        for a_label, b_label, count in [
            ("x", "x", 20), ("x", "y", 5), ("y", "x", 10), ("y", "y", 15),
        ]:
            rater_a += [a_label] * count
            rater_b += [b_label] * count
        assert cohen_kappa(rater_a, rater_b) == pytest.approx(0.40, abs=1e-12)

    def test_independent_uniform_ratings_near_zero(self):
        rng = np.random.default_rng(31)
        ratings = [[str(rng.integers(3)), str(rng.integers(3))] for _ in range(10000)]
        assert abs(fleiss_kappa(ratings)) < 0.05

    def test_fleiss_equals_one_iff_all_agree(self):
        assert fleiss_kappa([["a", "a"], ["b", "b"]]) == 1.0
        assert fleiss_kappa([["a", "b"], ["b", "b"]]) < 1.0

    def test_ragged_matrix_rejected(self):
        with pytest.raises(PkEngineError, match="ragged"):
            fleiss_kappa([["a", "b"], ["a"]])

    def test_empty_rejected(self):
        with pytest.raises(PkEngineError):
            fleiss_kappa([])

    def test_single_rater_rejected(self):
        with pytest.raises(PkEngineError):
            fleiss_kappa([["a"], ["b"]])

    def test_fleiss_known_value(self):
        """Two raters, half agreement on two balanced categories.

        counts: 2 items aa, 2 items bb, 2 items ab ->
        PA = 4/6, categories balanced -> PE = 0.5, kappa = 1/3.
        """
        ratings = [["a", "a"], ["b", "b"], ["a", "b"], ["b", "a"], ["a", "a"], ["b", "b"]]
        assert fleiss_kappa(ratings) == pytest.approx((4 / 6 - 0.5) / 0.5, abs=1e-12)


class TestBenefitRate:
    def test_seven_of_ten(self):
        votes = [True] * 7 + [False] * 3
        assert explanation_benefit_rate(votes) == pytest.approx(0.7)

    def test_all_false(self):
        assert explanation_benefit_rate([False, False]) == 0.0

    def test_all_true(self):
        assert explanation_benefit_rate([True] * 5) == 1.0

    def test_permutation_invariant(self):
        votes = [True, False, True, True, False]
        assert explanation_benefit_rate(votes) == explanation_benefit_rate(votes[::-1])

    def test_empty_rejected(self):
        with pytest.raises(PkEngineError):
            explanation_benefit_rate([])


class TestEvaluate:
    def test_assembles_summary(self):
        golds = ["1", "0", "1", "0"]
        preds = ["1", "0", "0", "0"]
        dists = [dist(0.9), dist(0.2), dist(0.4), dist(0.1)]
        result = evaluate(golds, preds, dists)
        assert result.n == 4
        assert result.accuracy == 0.75
        assert result.per_label["1"]["support"] == 2
        assert result.per_label["1"]["recall"] == 0.5
        assert result.auc_roc == pytest.approx(
            pair_counting_auc([0.9, 0.2, 0.4, 0.1], [True, False, True, False]), abs=1e-12
        )

    def test_condition_accuracy(self):
        pairs = [
            ({"C1": True, "C2": False}, {"C1": True, "C2": True}),
            ({"C1": False, "C2": True}, {"C1": True, "C2": True}),
        ]
        result = evaluate(["1", "1"], ["1", "1"], condition_truths=pairs)
        assert result.condition_accuracy == {"C1": 0.5, "C2": 0.5}

    def test_table_renders(self):
        result = evaluate(["1", "0"], ["1", "0"], [dist(0.8), dist(0.3)])
        table = result.format_table()
        assert "accuracy" in table and "auc_roc" in table


class TestCrossLibraryAgreement:
    """Sanity against independent library implementations (test-only deps)."""

    def test_fleiss_matches_statsmodels(self):
        sm = pytest.importorskip("statsmodels.stats.inter_rater")
        rng = np.random.default_rng(77)
        for _ in range(20):
            n_items = int(rng.integers(3, 40))
            n_raters = int(rng.integers(2, 6))
            ratings = [
                [str(rng.integers(3)) for _ in range(n_raters)] for _ in range(n_items)
            ]
            counts, _ = sm.aggregate_raters(
                np.array([[int(c) for c in row] for row in ratings])
            )
            expected = sm.fleiss_kappa(counts)
            assert fleiss_kappa(ratings) == pytest.approx(expected, abs=1e-12)

    def test_binary_auc_matches_sklearn(self):
        skm = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(78)
        for _ in range(20):
            n = int(rng.integers(4, 80))
            golds = rng.choice(["0", "1"], size=n)
            if len(set(golds)) < 2:
                continue
            ps = np.round(rng.uniform(0, 1, size=n), 2)
            scored = [(dist(float(p)), g) for p, g in zip(ps, golds)]
            expected = skm.roc_auc_score([g == "1" for g in golds], ps)
            assert auc_roc(scored) == pytest.approx(expected, abs=1e-12)

    def test_cohen_matches_sklearn(self):
        skm = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(79)
        for _ in range(20):
            n = int(rng.integers(5, 60))
            a = [str(rng.integers(3)) for _ in range(n)]
            b = [str(rng.integers(3)) for _ in range(n)]
            ours = cohen_kappa(a, b)
            theirs = skm.cohen_kappa_score(a, b)
            if np.isnan(theirs):
                continue  # sklearn's NaN convention for degenerate tables
            assert ours == pytest.approx(theirs, abs=1e-12)
