import numpy as np
import pytest

from keywordloop.eval_harness.metrics import accuracy, auc_pr


def reference_average_precision(scores, labels):
    """Brute-force average precision: walk the stable descending ranking."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / rank
    return total / sum(labels)


def reference_accuracy(scores, labels, threshold=0.5):
    return sum(
        1 for s, y in zip(scores, labels) if (s >= threshold) == bool(y)
    ) / len(scores)


class TestAucPr:
    def test_perfect_ranking(self):
        assert auc_pr([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_worked_example(self):
        assert auc_pr([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(
            (1 + 2 / 3) / 2, abs=1e-12
        )

    def test_equal_scores_evenly_spread_positives(self):
        # positives at stable ranks 5 and 10: precision 1/5 at both
        labels = [0, 0, 0, 0, 1, 0, 0, 0, 0, 1]
        scores = [0.5] * 10
        expected = reference_average_precision(scores, labels)
        assert expected == pytest.approx(0.2, abs=1e-12)
        assert auc_pr(scores, labels) == pytest.approx(expected, abs=1e-12)

    def test_no_positives_is_an_error(self):
        with pytest.raises(ValueError):
            auc_pr([0.1, 0.2], [0, 0])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            n = int(rng.integers(2, 60))
            scores = rng.choice([0.1, 0.3, 0.5, 0.7, 0.9], size=n)  # force ties
            labels = rng.integers(0, 2, size=n)
            if labels.sum() == 0:
                labels[int(rng.integers(0, n))] = 1
            assert auc_pr(scores, labels) == pytest.approx(
                reference_average_precision(list(scores), list(labels)), abs=1e-12
            )

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(5)
        scores = rng.random(50)
        labels = rng.integers(0, 2, size=50)
        labels[0] = 1
        transformed = np.exp(3.0 * scores) + 7.0
        assert auc_pr(scores, labels) == pytest.approx(
            auc_pr(transformed, labels), abs=1e-12
        )


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([0.9, 0.1], [1, 0]) == 1.0

    def test_constant_zero_scores_on_imbalanced_data(self):
        # 27% positives, all scores 0.0: only the negatives are right
        labels = [1] * 27 + [0] * 73
        assert accuracy([0.0] * 100, labels) == pytest.approx(0.73)

    def test_threshold_boundary_counts_positive(self):
        assert accuracy([0.5], [1]) == 1.0
        assert accuracy([0.5], [0]) == 0.0

    def test_empty_is_an_error(self):
        with pytest.raises(ValueError):
            accuracy([], [])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 40))
            scores = rng.random(n)
            labels = rng.integers(0, 2, size=n)
            assert accuracy(scores, labels) == pytest.approx(
                reference_accuracy(list(scores), list(labels)), abs=1e-12
            )
