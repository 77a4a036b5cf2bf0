import numpy as np
import pytest

from keywordloop.corpus import Micropost, tokenize
from keywordloop.crowd_model import (
    AnnotationMatrix,
    ConfusionMatrix,
    PosteriorLabels,
    VocabularyExhausted,
    annotation_likelihood,
    annotation_log_likelihood,
    e_step,
    m_step_confusions,
    majority_vote,
    run_em,
    simulate_annotations,
    simulate_keyword_pick,
    worker_pool,
)


def matrix_from(rows):
    """rows: list of dicts worker->label, items auto-named."""
    records = []
    for m, row in enumerate(rows):
        for worker, label in row.items():
            records.append((f"i{m}", worker, label))
    return AnnotationMatrix.from_records(records)


def confusion(worker_id, p11, p00):
    return ConfusionMatrix(
        worker_id, np.array([[p00, 1.0 - p11], [1.0 - p00, p11]])
    )


class TestAnnotationMatrix:
    def test_requires_every_item_labeled(self):
        with pytest.raises(ValueError):
            AnnotationMatrix(("a", "b"), ("w",), {(0, 0): 1})

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            AnnotationMatrix(("a",), ("w",), {(0, 0): 2})

    def test_dump_load_roundtrip(self, tmp_path):
        matrix = matrix_from([{"w1": 1, "w2": 0}, {"w1": 0}])
        path = tmp_path / "annotations.jsonl"
        matrix.dump(path)
        again = AnnotationMatrix.load(path)
        assert again.to_records() == matrix.to_records()


class TestMajorityVote:
    def test_mode(self):
        labels, _ = majority_vote(matrix_from([{"a": 1, "b": 1, "c": 0}]))
        assert labels == [1]

    def test_tie_breaks_positive(self):
        labels, _ = majority_vote(matrix_from([{"a": 1, "b": 0}]))
        assert labels == [1]

    def test_fraction(self):
        rows = [{"a": 1} for _ in range(2)] + [{"a": 0} for _ in range(8)]
        _, fraction = majority_vote(matrix_from(rows))
        assert fraction == pytest.approx(0.2)


class TestSimulateAnnotations:
    def test_identity_confusions_reproduce_truths(self):
        truths = {f"i{m}": m % 2 for m in range(20)}
        workers = worker_pool([1.0, 1.0], seed=0)
        matrix = simulate_annotations(truths, workers, seed=5)
        dense = matrix.to_dense()
        expected = np.array([truths[i] for i in matrix.item_ids])
        assert np.array_equal(dense[:, 0], expected)
        assert np.array_equal(dense[:, 1], expected)

    def test_law_of_large_numbers(self):
        truths = {f"i{m}": 1 for m in range(10000)}
        workers = worker_pool([0.9], seed=0)
        matrix = simulate_annotations(truths, workers, seed=3)
        rate = matrix.to_dense()[:, 0].mean()
        assert abs(rate - 0.9) <= 0.01

    def test_seed_determinism(self):
        truths = {f"i{m}": m % 2 for m in range(15)}
        workers = worker_pool([0.8, 0.6], seed=0)
        a = simulate_annotations(truths, workers, seed=9)
        b = simulate_annotations(truths, workers, seed=9)
        assert a.entries == b.entries

    def test_draws_do_not_depend_on_pair_order(self):
        truths = {f"i{m}": 1 for m in range(6)}
        workers = worker_pool([0.7, 0.7], seed=0)
        pairs = [(m, n) for m in range(6) for n in range(2)]
        a = simulate_annotations(truths, workers, seed=1, pairs=pairs)
        b = simulate_annotations(truths, workers, seed=1, pairs=list(reversed(pairs)))
        assert a.entries == b.entries


class TestAnnotationLikelihood:
    def setup_method(self):
        self.confusions = {
            "w1": confusion("w1", p11=0.9, p00=0.8),
            "w2": confusion("w2", p11=0.9, p00=0.8),
        }

    def test_worked_mixture(self):
        # e=0.7, both workers label 1: 0.7*0.81 + 0.3*0.04 = 0.579
        value = annotation_likelihood({"w1": 1, "w2": 1}, 0.7, self.confusions)
        assert value == pytest.approx(0.579, abs=1e-12)

    def test_identity_single_worker(self):
        confusions = {"w": confusion("w", 1.0, 1.0)}
        assert annotation_likelihood({"w": 1}, 0.7, confusions) == pytest.approx(0.7)

    def test_degenerate_prior_single_term(self):
        value = annotation_likelihood({"w1": 1, "w2": 0}, 0.0, self.confusions)
        assert value == pytest.approx(0.2 * 0.8, abs=1e-12)

    def test_missing_worker_is_an_error(self):
        with pytest.raises(KeyError):
            annotation_likelihood({"unknown": 1}, 0.5, self.confusions)

    def test_brute_force_oracle_random_instances(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            n_items = int(rng.integers(1, 11))
            n_workers = int(rng.integers(1, 5))
            prior = float(rng.uniform(0.05, 0.95))
            confusions = {}
            for n in range(n_workers):
                confusions[f"w{n}"] = confusion(
                    f"w{n}", float(rng.uniform(0.5, 0.99)), float(rng.uniform(0.5, 0.99))
                )
            rows = []
            for _ in range(n_items):
                present = rng.random(n_workers) < 0.8
                if not present.any():
                    present[int(rng.integers(0, n_workers))] = True
                rows.append(
                    {f"w{n}": int(rng.integers(0, 2)) for n in range(n_workers) if present[n]}
                )
            matrix = matrix_from(rows)
            total = 0.0
            for row in rows:
                by_class = []
                for s, prior_s in ((0, 1.0 - prior), (1, prior)):
                    term = prior_s
                    for worker, label in row.items():
                        term *= confusions[worker].matrix[label, s]
                    by_class.append(term)
                value = annotation_likelihood(row, prior, confusions)
                assert value == pytest.approx(sum(by_class), abs=1e-12)
                total += np.log(sum(by_class))
            assert annotation_log_likelihood(matrix, prior, confusions) == pytest.approx(
                total, abs=1e-9
            )


class TestEStep:
    def setup_method(self):
        self.confusions = {
            "w1": confusion("w1", p11=0.9, p00=0.8),
            "w2": confusion("w2", p11=0.9, p00=0.8),
        }

    def test_worked_posterior(self):
        matrix = matrix_from([{"w1": 1, "w2": 1}])
        posteriors = e_step(matrix, 0.7, self.confusions)
        assert posteriors.positive()[0] == pytest.approx(0.567 / 0.579, abs=1e-9)

    def test_unanimous_identity_concentrates(self):
        confusions = {"w1": confusion("w1", 1.0, 1.0), "w2": confusion("w2", 1.0, 1.0)}
        matrix = matrix_from([{"w1": 1, "w2": 1}, {"w1": 0, "w2": 0}])
        posteriors = e_step(matrix, 0.4, confusions)
        np.testing.assert_allclose(posteriors.positive(), [1.0, 0.0], atol=1e-15)

    def test_uninformative_workers_return_prior(self):
        confusions = {"w1": confusion("w1", 0.5, 0.5)}
        matrix = matrix_from([{"w1": 1}, {"w1": 0}])
        posteriors = e_step(matrix, 0.37, confusions)
        np.testing.assert_allclose(posteriors.positive(), [0.37, 0.37], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            rows = [
                {f"w{n}": int(rng.integers(0, 2)) for n in range(3)}
                for _ in range(int(rng.integers(1, 8)))
            ]
            confusions = {
                f"w{n}": confusion(
                    f"w{n}", float(rng.uniform(0.4, 0.99)), float(rng.uniform(0.4, 0.99))
                )
                for n in range(3)
            }
            posteriors = e_step(matrix_from(rows), float(rng.uniform(0.1, 0.9)), confusions)
            np.testing.assert_allclose(posteriors.probs.sum(axis=1), 1.0, atol=1e-12)


class TestMStep:
    def test_reliable_worker_near_identity(self):
        rows = [{"w": m % 2} for m in range(10)]
        q = np.zeros((10, 2))
        q[np.arange(10), [m % 2 for m in range(10)]] = 1.0
        matrix = matrix_from(rows)
        confusions = m_step_confusions(matrix, PosteriorLabels(matrix.item_ids, q), 1.0)
        mat = confusions["w"].matrix
        assert mat[1, 1] == pytest.approx(6 / 7)  # (1+5)/(2+5)
        assert mat[0, 0] == pytest.approx(6 / 7)

    def test_half_flipped_counts(self):
        # 8 certainly-positive items, worker labels 4 of them as 1
        rows = [{"w": 1 if m < 4 else 0} for m in range(8)]
        q = np.zeros((8, 2))
        q[:, 1] = 1.0
        matrix = matrix_from(rows)
        for alpha in (1.0, 0.5, 2.0):
            confusions = m_step_confusions(matrix, PosteriorLabels(matrix.item_ids, q), alpha)
            assert confusions["w"].matrix[1, 1] == pytest.approx(
                (alpha + 4) / (2 * alpha + 8)
            )

    def test_zero_smoothing_gives_zero_cells(self):
        rows = [{"w": 1} for _ in range(8)]
        q = np.zeros((8, 2))
        q[:, 1] = 1.0
        matrix = matrix_from(rows)
        confusions = m_step_confusions(matrix, PosteriorLabels(matrix.item_ids, q), 0.0)
        assert confusions["w"].matrix[0, 1] == 0.0
        # the class-0 column has no mass at all and falls back to 0.5
        assert confusions["w"].matrix[0, 0] == 0.5

    def test_columns_sum_exactly_to_one(self):
        rng = np.random.default_rng(55)
        rows = [
            {f"w{n}": int(rng.integers(0, 2)) for n in range(4)} for _ in range(30)
        ]
        matrix = matrix_from(rows)
        q = rng.dirichlet([1, 1], size=30)
        confusions = m_step_confusions(matrix, PosteriorLabels(matrix.item_ids, q), 1.0)
        for conf in confusions.values():
            assert np.all(conf.matrix.sum(axis=0) == 1.0)


class TestEmRuns:
    def test_likelihood_never_decreases_without_smoothing(self):
        for seed in range(40):
            rng = np.random.default_rng((3000, seed))
            n_items = int(rng.integers(10, 40))
            n_workers = int(rng.integers(2, 5))
            truths = {
                f"i{m}": int(rng.random() < rng.uniform(0.2, 0.8))
                for m in range(n_items)
            }
            workers = worker_pool(rng.uniform(0.55, 0.95, size=n_workers), seed=seed)
            matrix = simulate_annotations(truths, workers, seed=seed)
            for update_prior in (False, True):
                _, _, _, history = run_em(
                    matrix, smoothing=0.0, update_prior=update_prior, max_rounds=30
                )
                diffs = np.diff(history)
                assert np.all(diffs >= -1e-9)

    def test_recovers_planted_parameters(self):
        # exact 30% positive composition so the planted prior is identifiable
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng((4000, seed))
            labels = np.zeros(300, dtype=int)
            labels[:90] = 1
            rng.shuffle(labels)
            truths = {f"i{m:03d}": int(labels[m]) for m in range(300)}
            workers = worker_pool([0.85] * 5, seed=seed)
            matrix = simulate_annotations(truths, workers, seed=seed)
            _, confusions, prior, _ = run_em(matrix)
            truth_vec = np.array([truths[i] for i in matrix.item_ids])
            dense = matrix.to_dense()
            worst = 0.0
            for n, worker in enumerate(workers):
                empirical = np.empty((2, 2))
                for s in (0, 1):
                    rate = (dense[truth_vec == s, n] == 1).mean()
                    empirical[1, s] = rate
                    empirical[0, s] = 1.0 - rate
                worst = max(
                    worst,
                    np.abs(confusions[worker.worker_id].matrix - empirical).max(),
                )
            if abs(prior - 0.3) <= 0.05 and worst <= 0.1:
                hits += 1
        assert hits >= 19


def pick_post(pid, text):
    return Micropost(id=pid, text=text, tokens=tokenize(text))


class TestSimulateKeywordPick:
    def test_highest_informativeness_wins(self):
        selected = [
            (pick_post("a", "breach attack reported"), 0.9, 1),
            (pick_post("b", "attack again"), 0.8, 1),
        ]
        lexicon = {"breach": 0.95, "attack": 0.9}
        assert simulate_keyword_pick(selected, lexicon, used=set()) == "attack"
        # frequency-weighted: attack appears twice; drop one occurrence
        selected = [(pick_post("a", "breach attack reported"), 0.9, 1)]
        assert simulate_keyword_pick(selected, lexicon, used=set()) == "breach"

    def test_wrong_predictions_excluded(self):
        selected = [
            (pick_post("a", "breach inside"), 0.9, 0),  # model says 1, truth 0
            (pick_post("b", "attack outside"), 0.8, 1),
        ]
        lexicon = {"breach": 0.99, "attack": 0.9}
        assert simulate_keyword_pick(selected, lexicon, used=set()) == "attack"

    def test_all_tokens_used_raises(self):
        selected = [(pick_post("a", "breach attack"), 0.9, 1)]
        lexicon = {"breach": 0.95, "attack": 0.9}
        with pytest.raises(VocabularyExhausted):
            simulate_keyword_pick(selected, lexicon, used={"breach", "attack"})

    def test_equal_scores_tie_lexicographic(self):
        selected = [(pick_post("a", "delta casa"), 0.9, 1)]
        lexicon = {"delta": 0.9, "casa": 0.9}
        assert simulate_keyword_pick(selected, lexicon, used=set()) == "casa"
