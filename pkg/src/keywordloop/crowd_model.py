"""Crowd annotation machinery: confusion-matrix truth inference and simulation.

Workers are modeled Dawid-Skene style: worker ``n`` has a 2x2 confusion
matrix whose (r, s) entry is the probability of assigning label r when the
true class is s. The E-step infers per-item posteriors over the true label
from a class prior and the confusion matrices; the M-step re-estimates the
confusion matrices from those posteriors with Laplace smoothing. Simulated
workers make the whole pipeline runnable without a crowd platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

DEFAULT_SMOOTHING = 1.0


@dataclass(frozen=True)
class AnnotationMatrix:
    """Partial item x worker label matrix; every item has at least one label."""

    item_ids: tuple[str, ...]
    worker_ids: tuple[str, ...]
    entries: dict[tuple[int, int], int]

    def __post_init__(self) -> None:
        if not self.item_ids or not self.worker_ids:
            raise ValueError("annotation matrix needs at least one item and one worker")
        covered = set()
        for (m, n), label in self.entries.items():
            if not (0 <= m < len(self.item_ids) and 0 <= n < len(self.worker_ids)):
                raise ValueError(f"entry ({m}, {n}) outside matrix bounds")
            if label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {label!r}")
            covered.add(m)
        if covered != set(range(len(self.item_ids))):
            missing = sorted(set(range(len(self.item_ids))) - covered)
            raise ValueError(f"items without any annotation: {missing}")

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_workers(self) -> int:
        return len(self.worker_ids)

    def to_dense(self) -> np.ndarray:
        """Dense int matrix with -1 for missing entries."""
        dense = np.full((self.n_items, self.n_workers), -1, dtype=np.int64)
        for (m, n), label in self.entries.items():
            dense[m, n] = label
        return dense

    def item_entries(self) -> list[list[tuple[int, int]]]:
        """Per-item list of (worker_index, label), cached after first use."""
        cached = getattr(self, "_item_entries", None)
        if cached is None:
            cached = [[] for _ in range(self.n_items)]
            for (m, n), label in sorted(self.entries.items()):
                cached[m].append((n, label))
            object.__setattr__(self, "_item_entries", cached)
        return cached

    def row(self, m: int) -> dict[str, int]:
        """worker_id -> label for one item."""
        return {self.worker_ids[n]: label for n, label in self.item_entries()[m]}

    @classmethod
    def from_records(cls, records) -> "AnnotationMatrix":
        """Build from (item_id, worker_id, label) triples, preserving first-seen order."""
        item_ids: list[str] = []
        worker_ids: list[str] = []
        item_idx: dict[str, int] = {}
        worker_idx: dict[str, int] = {}
        entries: dict[tuple[int, int], int] = {}
        for item_id, worker_id, label in records:
            if item_id not in item_idx:
                item_idx[item_id] = len(item_ids)
                item_ids.append(item_id)
            if worker_id not in worker_idx:
                worker_idx[worker_id] = len(worker_ids)
                worker_ids.append(worker_id)
            entries[(item_idx[item_id], worker_idx[worker_id])] = int(label)
        return cls(tuple(item_ids), tuple(worker_ids), entries)

    def to_records(self) -> list[tuple[str, str, int]]:
        return [
            (self.item_ids[m], self.worker_ids[n], label)
            for (m, n), label in sorted(self.entries.items())
        ]

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for item_id, worker_id, label in self.to_records():
                fh.write(
                    json.dumps({"item_id": item_id, "worker_id": worker_id, "label": label})
                    + "\n"
                )

    @classmethod
    def load(cls, path) -> "AnnotationMatrix":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    records.append((rec["item_id"], rec["worker_id"], rec["label"]))
        return cls.from_records(records)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Per-worker P(assigned label r | true class s); columns sum to 1."""

    worker_id: str
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", mat)
        if mat.shape != (2, 2):
            raise ValueError("confusion matrix must be 2x2")
        if np.any(mat < 0) or np.any(mat > 1):
            raise ValueError("confusion entries must lie in [0, 1]")
        if not np.allclose(mat.sum(axis=0), 1.0, atol=1e-9):
            raise ValueError("confusion matrix columns must sum to 1")

    @classmethod
    def from_accuracy(cls, worker_id: str, accuracy: float) -> "ConfusionMatrix":
        """Symmetric worker: P(correct label | either class) = accuracy."""
        a = float(accuracy)
        return cls(worker_id, np.array([[a, 1.0 - a], [1.0 - a, a]]))


@dataclass(frozen=True)
class PosteriorLabels:
    """Per-item distribution over {0, 1}; rows sum to 1."""

    item_ids: tuple[str, ...]
    probs: np.ndarray  # shape (M, 2)

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (len(self.item_ids), 2):
            raise ValueError("posterior shape must be (n_items, 2)")

    def positive(self) -> np.ndarray:
        return self.probs[:, 1]

    def mean_positive(self) -> float:
        return float(self.probs[:, 1].mean())


@dataclass(frozen=True)
class SimulatedWorker:
    confusion: ConfusionMatrix
    seed: int = 0

    @property
    def worker_id(self) -> str:
        return self.confusion.worker_id


def worker_pool(accuracies, seed: int = 0) -> list[SimulatedWorker]:
    """Simulated workers w001, w002, ... with the given accuracies."""
    return [
        SimulatedWorker(ConfusionMatrix.from_accuracy(f"w{k + 1:03d}", acc), seed=seed + k)
        for k, acc in enumerate(accuracies)
    ]


def majority_vote(matrix: AnnotationMatrix) -> tuple[list[int], float]:
    """Per-item modal label (ties toward positive) and the positive fraction."""
    dense = matrix.to_dense()
    labels: list[int] = []
    for m in range(matrix.n_items):
        row = dense[m]
        votes = row[row >= 0]
        ones = int((votes == 1).sum())
        zeros = votes.size - ones
        labels.append(1 if ones >= zeros else 0)
    fraction = float(np.mean(labels)) if labels else 0.0
    return labels, fraction


def simulate_annotations(
    truths: dict[str, int],
    workers,
    seed: int,
    pairs=None,
) -> AnnotationMatrix:
    """Draw labels from each worker's confusion column for the true class.

    ``pairs`` optionally restricts to (item_index, worker_index) pairs for
    partial designs; default is the full matrix. Randomness is derived
    per (seed, item, worker), so a given cell's draw does not depend on
    which other cells are generated.
    """
    workers = list(workers)
    if not workers:
        raise ValueError("need at least one worker")
    item_ids = list(truths)
    if pairs is None:
        pairs = [(m, n) for m in range(len(item_ids)) for n in range(len(workers))]
    raw: dict[tuple[int, int], int] = {}
    for m, n in pairs:
        true_class = truths[item_ids[m]]
        p_label_1 = workers[n].confusion.matrix[1, true_class]
        rng = np.random.default_rng((seed, m, n))
        raw[(m, n)] = int(rng.random() < p_label_1)
    # workers that received no assignment are dropped so downstream
    # estimation never sees an empty column
    active = sorted({n for _, n in raw})
    remap = {n: i for i, n in enumerate(active)}
    entries = {(m, remap[n]): label for (m, n), label in raw.items()}
    return AnnotationMatrix(
        tuple(item_ids), tuple(workers[n].worker_id for n in active), entries
    )


def _prior_vector(positive_prior: float) -> np.ndarray:
    if not 0.0 <= positive_prior <= 1.0:
        raise ValueError(f"class prior must lie in [0, 1], got {positive_prior}")
    return np.array([1.0 - positive_prior, positive_prior])


def _log_confusion_stack(
    matrix: AnnotationMatrix, confusions: dict[str, ConfusionMatrix]
) -> np.ndarray:
    """log pi per worker in matrix order, shape (N, 2, 2)."""
    stack = np.empty((matrix.n_workers, 2, 2))
    for n, worker_id in enumerate(matrix.worker_ids):
        conf = confusions.get(worker_id)
        if conf is None:
            raise KeyError(f"no confusion matrix for worker {worker_id!r}")
        stack[n] = conf.matrix
    with np.errstate(divide="ignore"):
        return np.log(stack)


def _item_log_joint(matrix, log_prior, log_pi) -> np.ndarray:
    """log(prior_s * prod_n pi[label, s]) per item, shape (M, 2)."""
    out = np.tile(log_prior, (matrix.n_items, 1))
    for m, entries in enumerate(matrix.item_entries()):
        for n, label in entries:
            out[m] += log_pi[n, label, :]
    return out


def annotation_likelihood(
    row: dict[str, int], positive_prior: float, confusions: dict[str, ConfusionMatrix]
) -> float:
    """Mixture likelihood of one item's labels, marginalizing the true class."""
    prior = _prior_vector(positive_prior)
    with np.errstate(divide="ignore"):
        log_joint = np.log(prior)
        for worker_id, label in row.items():
            conf = confusions.get(worker_id)
            if conf is None:
                raise KeyError(f"no confusion matrix for worker {worker_id!r}")
            log_joint = log_joint + np.log(conf.matrix[label, :])
    return float(np.exp(logsumexp(log_joint)))


def annotation_log_likelihood(
    matrix: AnnotationMatrix, positive_prior: float, confusions: dict[str, ConfusionMatrix]
) -> float:
    """Sum of per-item log mixture likelihoods over the whole matrix."""
    prior = _prior_vector(positive_prior)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    log_joint = _item_log_joint(matrix, log_prior, _log_confusion_stack(matrix, confusions))
    return float(logsumexp(log_joint, axis=1).sum())


def e_step(
    matrix: AnnotationMatrix, positive_prior: float, confusions: dict[str, ConfusionMatrix]
) -> PosteriorLabels:
    """Posterior over each item's true label given prior and confusions."""
    prior = _prior_vector(positive_prior)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    log_joint = _item_log_joint(matrix, log_prior, _log_confusion_stack(matrix, confusions))
    norms = logsumexp(log_joint, axis=1)
    if not np.all(np.isfinite(norms)):
        bad = matrix.item_ids[int(np.flatnonzero(~np.isfinite(norms))[0])]
        raise ValueError(
            f"zero total mass for item {bad!r}; "
            "use a nondegenerate prior or smoothed confusions"
        )
    probs = np.exp(log_joint - norms[:, None])
    return PosteriorLabels(matrix.item_ids, probs)


def m_step_confusions(
    matrix: AnnotationMatrix,
    posteriors: PosteriorLabels,
    smoothing: float | tuple[float, float] = DEFAULT_SMOOTHING,
) -> dict[str, ConfusionMatrix]:
    """Confusion matrices from posterior-weighted counts with Laplace smoothing.

    A scalar ``smoothing`` adds the same pseudo-count to every cell; 0 gives
    the exact maximizer of the expected complete log-likelihood, with a
    column falling back to 0.5 when its posterior mass is zero. A
    (diagonal, off_diagonal) pair tilts the prior toward better-than-chance
    workers, which keeps small low-prevalence batches away from the
    degenerate solution that declares the minority class to be annotation
    noise.
    """
    if isinstance(smoothing, tuple):
        diag_s, off_s = smoothing
    else:
        diag_s = off_s = float(smoothing)
    q = posteriors.probs
    result: dict[str, ConfusionMatrix] = {}
    counts = {n: np.zeros((2, 2)) for n in range(matrix.n_workers)}
    # sorted so the float accumulation is independent of insertion order
    for (m, n), label in sorted(matrix.entries.items()):
        counts[n][label] += q[m]
    for n, worker_id in enumerate(matrix.worker_ids):
        if not np.any(counts[n]):
            raise ValueError(f"worker {worker_id!r} has no annotations")
        mat = np.empty((2, 2))
        for s in (0, 1):
            denom = diag_s + off_s + counts[n][:, s].sum()
            if denom <= 0.0:
                mat[:, s] = 0.5
            else:
                add_one = diag_s if s == 1 else off_s
                # complement keeps each column summing to 1 exactly
                mat[1, s] = (add_one + counts[n][1, s]) / denom
                mat[0, s] = 1.0 - mat[1, s]
        result[worker_id] = ConfusionMatrix(worker_id, mat)
    return result


def run_em(
    matrix: AnnotationMatrix,
    positive_prior: float = 0.5,
    smoothing: float = DEFAULT_SMOOTHING,
    max_rounds: int = 50,
    tol: float = 1e-9,
    update_prior: bool = True,
) -> tuple[PosteriorLabels, dict[str, ConfusionMatrix], float, list[float]]:
    """Alternate E/M from a majority-vote start until the likelihood settles.

    Returns (posteriors, confusions, final prior, per-round log-likelihoods).
    """
    hard, _ = majority_vote(matrix)
    q0 = np.zeros((matrix.n_items, 2))
    q0[np.arange(matrix.n_items), hard] = 1.0
    confusions = m_step_confusions(matrix, PosteriorLabels(matrix.item_ids, q0), smoothing)
    prior = positive_prior
    history: list[float] = []
    posteriors = PosteriorLabels(matrix.item_ids, q0)
    for _ in range(max_rounds):
        posteriors = e_step(matrix, prior, confusions)
        confusions = m_step_confusions(matrix, posteriors, smoothing)
        if update_prior:
            prior = posteriors.mean_positive()
        value = annotation_log_likelihood(matrix, prior, confusions)
        if history and abs(value - history[-1]) <= tol * max(1.0, abs(history[-1])):
            history.append(value)
            break
        history.append(value)
    return posteriors, confusions, prior, history


class VocabularyExhausted(RuntimeError):
    """No unused candidate token remains for keyword discovery."""


def simulate_keyword_pick(
    selected,
    lexicon: dict[str, float],
    used,
    seed: int = 0,
) -> str:
    """One simulated worker's keyword pick over a disagreement task.

    ``selected`` is a sequence of (micropost, predicted probability,
    planted true label). The worker first keeps the microposts whose
    predicted class matches the planted truth, then scores each unused
    lexicon token by its planted informativeness summed over occurrences
    in the kept posts (so frequent informative tokens win). Ties break
    lexicographically. When no prediction in the batch looks correct the
    worker falls back to the whole batch rather than returning nothing.
    Raises :class:`VocabularyExhausted` when no unused candidate remains.
    """
    # seed kept for interface parity with the label simulator; the pick
    # itself is deterministic.
    del seed
    selected = list(selected)
    if not selected:
        raise ValueError("selected set is empty")
    used = set(used)

    def score_over(posts) -> dict[str, float]:
        scores: dict[str, float] = {}
        for post, _, _ in posts:
            for token in post.tokens:
                if token in used or token not in lexicon:
                    continue
                scores[token] = scores.get(token, 0.0) + lexicon[token]
        return scores

    correct = [
        (post, prediction, truth)
        for post, prediction, truth in selected
        if truth is None or (1 if prediction >= 0.5 else 0) == truth
    ]
    scores = score_over(correct)
    if not scores:
        scores = score_over(selected)
    if not scores:
        raise VocabularyExhausted("no unused informative token in the selected microposts")
    return min(scores, key=lambda tok: (-scores[tok], tok))
