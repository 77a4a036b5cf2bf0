"""Weakly supervised target models: logistic regression and MLP on bag-of-words.

The training objective combines the log-likelihood of positively labeled
microposts, a Gaussian parameter prior, and a keyword-expectation
regularizer: for every keyword record the KL divergence between the
Bernoulli distribution at the keyword's expectation and the Bernoulli at the
model's mean prediction over the keyword-matched unlabeled microposts is
penalized. Gradients are exact, including the coupling through that mean,
and optimization is plain full-batch (or minibatched) Adam ascent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .corpus import VectorizedCorpus

PROB_EPS = 1e-7

CHECKPOINT_FORMAT = "keywordloop-checkpoint"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    """Training objective became non-finite."""


@dataclass(frozen=True)
class KeywordRecord:
    """A keyword, its expectation, and the unlabeled ids that contain it."""

    keyword: str
    expectation: float
    matched: frozenset[str]

    def __post_init__(self) -> None:
        if not 0.0 <= self.expectation <= 1.0:
            raise ValueError(f"expectation must lie in [0, 1], got {self.expectation}")


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for the weakly supervised objective and Adam.

    ``regularization_strength`` of ``None`` resolves to 10x the number of
    labeled examples at training time. ``prior_scale`` defaults so the
    quadratic parameter penalty has weight 1e-4. ``batch_size`` 0 means
    full-batch updates. ``unlabeled_negative_weight`` optionally treats
    every unlabeled micropost as a weak negative; 0 disables it, leaving
    the expectation regularizer as the only negative signal.
    """

    regularization_strength: float | None = None
    prior_scale: float = math.sqrt(1.0 / (2.0 * 1e-4))
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 300
    batch_size: int = 0
    unlabeled_negative_weight: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValueError("adam betas must lie strictly between 0 and 1")
        if self.regularization_strength is not None and self.regularization_strength < 0:
            raise ValueError("regularization_strength must be >= 0")
        if self.prior_scale <= 0:
            raise ValueError("prior_scale must be > 0")
        if self.unlabeled_negative_weight < 0:
            raise ValueError("unlabeled_negative_weight must be >= 0")

    def resolve_strength(self, n_labeled: int) -> float:
        if self.regularization_strength is None:
            return 10.0 * n_labeled
        return self.regularization_strength


@dataclass
class TargetModel:
    """Feedforward classifier p(y=1|x) with tanh hidden layers and a logistic output.

    ``layer_dims`` lists hidden widths; empty means logistic regression.
    after training, treat instances as immutable snapshots.
    """

    kind: str
    layer_dims: tuple[int, ...]
    input_dim: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "TargetModel":
        return TargetModel(
            self.kind,
            self.layer_dims,
            self.input_dim,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def parameters(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, theta: np.ndarray) -> None:
        offset = 0
        for p in self.parameters():
            p[...] = theta[offset : offset + p.size].reshape(p.shape)
            offset += p.size


def init_model(
    kind: str, layer_dims, input_dim: int, seed: int = 0, scale: float = 1.0
) -> TargetModel:
    """Glorot-uniform weights and zero biases, reproducible per seed.

    ``scale`` shrinks the init range; a small scale gives a near-uniform
    predictor (outputs close to 0.5) while still breaking symmetry.
    """
    kind = kind.lower()
    if kind not in ("lr", "mlp"):
        raise ValueError(f"model kind must be 'lr' or 'mlp', got {kind!r}")
    layer_dims = tuple(int(d) for d in layer_dims)
    if kind == "lr" and layer_dims:
        raise ValueError("logistic regression takes no hidden layers")
    if input_dim < 1 or any(d < 1 for d in layer_dims):
        raise ValueError("all layer dimensions must be positive")
    rng = np.random.default_rng(seed)
    dims = [input_dim, *layer_dims, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = scale * math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return TargetModel(kind, layer_dims, input_dim, weights, biases)


def _forward(model: TargetModel, X) -> tuple[list[np.ndarray], np.ndarray]:
    """Hidden activations and output probabilities for a row matrix X."""
    h = X
    hiddens: list[np.ndarray] = []
    last = len(model.weights) - 1
    for layer, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        z = np.asarray(z)
        if layer < last:
            h = np.tanh(z)
            hiddens.append(h)
        else:
            logits = z[:, 0]
    return hiddens, expit(logits)


def _as_matrix(model: TargetModel, x):
    if isinstance(x, dict):
        row = np.zeros(model.input_dim)
        for idx, count in x.items():
            if not 0 <= idx < model.input_dim:
                raise ValueError(f"bag-of-words index {idx} outside input_dim {model.input_dim}")
            row[idx] = count
        return row[None, :], True
    if sp.issparse(x):
        mat = x.tocsr()
        single = mat.shape[0] == 1
    else:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            mat, single = arr[None, :], True
        else:
            mat, single = arr, False
    if mat.shape[1] != model.input_dim:
        raise ValueError(
            f"input has dimension {mat.shape[1]}, model expects {model.input_dim}"
        )
    return mat, single


def predict(model: TargetModel, x):
    """Probability of the event-related class; scalar for a single vector."""
    mat, single = _as_matrix(model, x)
    _, probs = _forward(model, mat)
    return float(probs[0]) if single else probs


def model_expectation(model: TargetModel, matched, corpus: VectorizedCorpus) -> float:
    """Mean predicted probability over the matched unlabeled microposts."""
    if not matched:
        raise ValueError("matched set is empty")
    rows = corpus.unlabeled_rows(matched)
    _, probs = _forward(model, corpus.X_unlabeled[rows])
    return float(probs.mean())


def bernoulli_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), q clamped to (0, 1).

    Uses the convention 0*log(0) = 0; nonnegative, zero iff p equals the
    clamped q.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    q = min(max(q, PROB_EPS), 1.0 - PROB_EPS)
    value = 0.0
    if p > 0.0:
        value += p * math.log(p / q)
    if p < 1.0:
        value += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return value


class TrainingProblem:
    """Precompiled row matrices for one (corpus, keywords, config) instance.

    Built once per training run so repeated objective/gradient evaluations
    avoid re-resolving ids to matrix rows. ``extra_labeled`` are
    (unlabeled id, label) pairs folded into the supervised term, used by the
    equal-cost labeling baseline.
    """

    def __init__(
        self,
        corpus: VectorizedCorpus,
        keywords,
        config: TrainingConfig,
        extra_labeled=(),
    ):
        keywords = list(keywords)
        for record in keywords:
            if not record.matched:
                raise ValueError(f"keyword {record.keyword!r} has an empty matched set")
        n_pos = corpus.X_positive.shape[0]
        blocks = [corpus.X_positive]
        y = [np.ones(n_pos)]
        if extra_labeled:
            label_by_id = {i: int(l) for i, l in extra_labeled}
            rows = corpus.unlabeled_rows(label_by_id)
            blocks.append(corpus.X_unlabeled[rows])
            y.append(np.asarray([label_by_id[corpus.unlabeled_ids[r]] for r in rows], float))
        self.X_labeled = sp.vstack(blocks).tocsr() if len(blocks) > 1 else blocks[0]
        self.y_labeled = np.concatenate(y)
        self.n_labeled = self.X_labeled.shape[0]
        if self.n_labeled == 0 and not keywords:
            raise ValueError("nothing to optimize: no labeled data and no keywords")

        self.expectations = np.asarray([r.expectation for r in keywords])
        keyword_rows = [corpus.unlabeled_rows(r.matched) for r in keywords]
        self.weak_weight = config.unlabeled_negative_weight
        if self.weak_weight > 0.0:
            union = np.arange(corpus.X_unlabeled.shape[0])
        else:
            union = np.unique(np.concatenate([np.empty(0, np.int64), *keyword_rows]))
        self.unl_rows = union
        self.X_unl = corpus.X_unlabeled[union] if union.size else corpus.X_unlabeled[:0]
        # positions of each keyword's rows inside the union block
        self.keyword_pos = [np.searchsorted(union, rows) for rows in keyword_rows]
        self.strength = config.resolve_strength(self.n_labeled)
        self.prior_weight = 1.0 / (2.0 * config.prior_scale**2)
        self.config = config

    def keyword_means(self, probs_unl: np.ndarray) -> np.ndarray:
        return np.asarray([probs_unl[pos].mean() for pos in self.keyword_pos])


def _log_clamped(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, PROB_EPS, 1.0 - PROB_EPS))


def _objective_value(model: TargetModel, problem: TrainingProblem) -> float:
    value = 0.0
    if problem.n_labeled:
        _, p = _forward(model, problem.X_labeled)
        y = problem.y_labeled
        value += float(y @ _log_clamped(p) + (1.0 - y) @ _log_clamped(1.0 - p))
    value -= problem.prior_weight * float(
        sum(np.sum(p * p) for p in model.parameters())
    )
    if problem.unl_rows.size:
        _, p_unl = _forward(model, problem.X_unl)
        if problem.expectations.size:
            means = problem.keyword_means(p_unl)
            value -= problem.strength * float(
                sum(bernoulli_kl(e, m) for e, m in zip(problem.expectations, means))
            )
        if problem.weak_weight > 0.0:
            value += problem.weak_weight * float(np.sum(_log_clamped(1.0 - p_unl)))
    return value


def _gradient_arrays(
    model: TargetModel,
    problem: TrainingProblem,
    labeled_idx: np.ndarray | None = None,
    labeled_scale: float = 1.0,
) -> list[np.ndarray]:
    """Gradient of the objective in parameter order weights+biases.

    ``labeled_idx``/``labeled_scale`` implement minibatching of the
    supervised term only; the expectation regularizer and prior always see
    their full inputs.
    """
    grads = [np.zeros_like(p) for p in model.parameters()]
    n_layers = len(model.weights)

    def backprop(X, hiddens, delta):
        # delta: dJ/dz at the output logit, shape (n,)
        delta = delta[:, None]
        for layer in range(n_layers - 1, -1, -1):
            inp = hiddens[layer - 1] if layer > 0 else X
            grads[layer] += np.asarray(inp.T @ delta)
            grads[n_layers + layer] += delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ model.weights[layer].T) * (1.0 - hiddens[layer - 1] ** 2)

    if problem.n_labeled:
        if labeled_idx is None:
            X_lab, y = problem.X_labeled, problem.y_labeled
        else:
            X_lab, y = problem.X_labeled[labeled_idx], problem.y_labeled[labeled_idx]
        hiddens, p = _forward(model, X_lab)
        backprop(X_lab, hiddens, labeled_scale * (y - p))

    if problem.unl_rows.size:
        hiddens, p = _forward(model, problem.X_unl)
        g = np.zeros_like(p)
        if problem.expectations.size:
            means = np.clip(problem.keyword_means(p), PROB_EPS, 1.0 - PROB_EPS)
            coef = problem.strength * (
                problem.expectations / means
                - (1.0 - problem.expectations) / (1.0 - means)
            )
            sigma_prime = p * (1.0 - p)
            for pos, c in zip(problem.keyword_pos, coef):
                g[pos] += (c / pos.size) * sigma_prime[pos]
        if problem.weak_weight > 0.0:
            g -= problem.weak_weight * p
        backprop(problem.X_unl, hiddens, g)

    for grad, param in zip(grads, model.parameters()):
        grad -= 2.0 * problem.prior_weight * param
    return grads


def objective(
    model: TargetModel,
    corpus: VectorizedCorpus,
    keywords,
    config: TrainingConfig,
    extra_labeled=(),
) -> float:
    """Value of the weakly supervised objective (higher is better)."""
    return _objective_value(model, TrainingProblem(corpus, keywords, config, extra_labeled))


def gradient(
    model: TargetModel,
    corpus: VectorizedCorpus,
    keywords,
    config: TrainingConfig,
    extra_labeled=(),
) -> list[np.ndarray]:
    """Exact objective gradient, ordered as weights then biases."""
    return _gradient_arrays(model, TrainingProblem(corpus, keywords, config, extra_labeled))


class AdamOptimizer:
    """Adam in ascent form; state persists across calls to ``step``."""

    def __init__(self, model: TargetModel, config: TrainingConfig):
        self.lr = config.learning_rate
        self.beta1 = config.adam_beta1
        self.beta2 = config.adam_beta2
        self.eps = config.adam_epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in model.parameters()]
        self.v = [np.zeros_like(p) for p in model.parameters()]

    def step(self, model: TargetModel, grads) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(model.parameters(), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p += self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def train(
    model: TargetModel,
    corpus: VectorizedCorpus,
    keywords,
    config: TrainingConfig,
    extra_labeled=(),
) -> TargetModel:
    """Adam-ascend the objective; returns the best parameters seen.

    The best-so-far snapshot includes the starting point, so the returned
    model never scores below the input model on the training objective.
    Raises :class:`DivergenceError` if the objective becomes non-finite.
    """
    problem = TrainingProblem(corpus, keywords, config, extra_labeled)
    model = model.copy()
    opt = AdamOptimizer(model, config)
    rng = np.random.default_rng(config.seed)

    best_value = _objective_value(model, problem)
    if not math.isfinite(best_value):
        raise DivergenceError(f"objective non-finite at initialization: {best_value}")
    best_params = [p.copy() for p in model.parameters()]

    full_batch = config.batch_size <= 0 or config.batch_size >= problem.n_labeled
    for epoch in range(config.max_epochs):
        if full_batch or problem.n_labeled == 0:
            opt.step(model, _gradient_arrays(model, problem))
        else:
            order = rng.permutation(problem.n_labeled)
            scale_base = problem.n_labeled
            for start in range(0, problem.n_labeled, config.batch_size):
                batch = order[start : start + config.batch_size]
                grads = _gradient_arrays(
                    model, problem, labeled_idx=batch, labeled_scale=scale_base / batch.size
                )
                opt.step(model, grads)
        value = _objective_value(model, problem)
        if not math.isfinite(value):
            raise DivergenceError(
                f"objective diverged at epoch {epoch + 1}: value={value}; "
                f"try a smaller learning_rate (currently {config.learning_rate})"
            )
        if value > best_value:
            best_value = value
            best_params = [p.copy() for p in model.parameters()]

    for target, source in zip(model.parameters(), best_params):
        target[...] = source
    return model


def save_checkpoint(model: TargetModel, path, vocab_hash: str = "") -> None:
    """Versioned text checkpoint that round-trips parameters bit-exactly."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "layer_dims": list(model.layer_dims),
        "input_dim": model.input_dim,
        "vocab_hash": vocab_hash,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[TargetModel, str]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    model = TargetModel(
        payload["kind"],
        tuple(payload["layer_dims"]),
        int(payload["input_dim"]),
        [np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        [np.asarray(b, dtype=np.float64) for b in payload["biases"]],
    )
    return model, payload.get("vocab_hash", "")
