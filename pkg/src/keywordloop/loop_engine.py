"""Iteration orchestrator for the human-AI training loop.

Each iteration runs three phases: sample keyword-matched microposts and
collect crowd labels, fit the expectation jointly with the model, then rank
model/crowd disagreement and ask the crowd for the next keyword. Phases are
exposed as separate pure-ish stage functions (plan / infer / finalize) so
the same code path serves both in-process backends and the HTTP task
service, which stretches one iteration over many requests.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import VectorizedCorpus, filter_by_keyword, sample_for_annotation
from .crowd_model import (
    AnnotationMatrix,
    VocabularyExhausted,
    majority_vote,
    simulate_annotations,
    simulate_keyword_pick,
)
from .eval_harness.metrics import accuracy, auc_pr
from .joint_inference import JointConfig, joint_fit
from .target_model import (
    KeywordRecord,
    TargetModel,
    TrainingConfig,
    init_model,
    predict,
    save_checkpoint,
    train,
)

# Compact built-in stopword list for keyword candidate filtering.
STOPWORDS = frozenset(
    """a about above after again all also am an and any are as at be because been
    before being below between both but by can could did do does doing down during
    each few for from further had has have having he her here hers him his how i if
    in into is it its just me more most my no nor not now of off on once only or
    other our ours out over own same she should so some such than that the their
    them then there these they this those through to too under until up very was we
    were what when where which while who whom why will with would you your yours""".split()
)


@dataclass(frozen=True)
class LoopConfig:
    """Loop-level settings; model and joint-fit settings ride along."""

    model_kind: str = "lr"
    hidden_dims: tuple[int, ...] = (64,)
    n_classify: int = 50
    n_discover: int = 50
    redundancy: int = 3
    n_picks: int = 1
    top_n_keywords: int = 1
    max_iterations: int = 9
    patience: int = 3
    min_delta: float = 0.002
    validation_fraction: float = 0.2
    min_token_len: int = 3
    expectation_mode: str = "joint"  # "joint" or "majority_vote"
    seed: int = 0
    training: TrainingConfig = TrainingConfig()
    joint: JointConfig = JointConfig()

    def __post_init__(self) -> None:
        if self.expectation_mode not in ("joint", "majority_vote"):
            raise ValueError(f"unknown expectation_mode {self.expectation_mode!r}")
        if self.model_kind.lower() not in ("lr", "mlp"):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")


def derive_seed(*parts: int) -> int:
    """Stable child seed from a tuple of integers."""
    return int(np.random.SeedSequence(tuple(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class LoopState:
    """Snapshot of the loop after ``iteration`` completed iterations."""

    iteration: int
    keywords: tuple[KeywordRecord, ...]
    model: TargetModel
    metrics: tuple[dict, ...]
    annotations: tuple[dict, ...]  # per keyword: {"iteration", "keyword", "records"}
    pending: tuple[str, ...]
    converged: bool = False
    exhausted: bool = False

    def __post_init__(self) -> None:
        seen = [r.keyword for r in self.keywords]
        if len(seen) != len(set(seen)):
            raise ValueError("keyword history contains duplicates")
        if len(self.metrics) != self.iteration:
            raise ValueError("metric history length must equal the iteration counter")

    @property
    def used_keywords(self) -> set[str]:
        return {r.keyword for r in self.keywords}

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "keywords": [
                {
                    "keyword": r.keyword,
                    "expectation": r.expectation,
                    "matched": sorted(r.matched),
                }
                for r in self.keywords
            ],
            "model": {
                "kind": self.model.kind,
                "layer_dims": list(self.model.layer_dims),
                "input_dim": self.model.input_dim,
                "weights": [w.tolist() for w in self.model.weights],
                "biases": [b.tolist() for b in self.model.biases],
            },
            "metrics": list(self.metrics),
            "annotations": list(self.annotations),
            "pending": list(self.pending),
            "converged": self.converged,
            "exhausted": self.exhausted,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LoopState":
        model = TargetModel(
            payload["model"]["kind"],
            tuple(payload["model"]["layer_dims"]),
            int(payload["model"]["input_dim"]),
            [np.asarray(w, dtype=np.float64) for w in payload["model"]["weights"]],
            [np.asarray(b, dtype=np.float64) for b in payload["model"]["biases"]],
        )
        keywords = tuple(
            KeywordRecord(k["keyword"], k["expectation"], frozenset(k["matched"]))
            for k in payload["keywords"]
        )
        return cls(
            iteration=payload["iteration"],
            keywords=keywords,
            model=model,
            metrics=tuple(payload["metrics"]),
            annotations=tuple(payload["annotations"]),
            pending=tuple(payload["pending"]),
            converged=payload["converged"],
            exhausted=payload["exhausted"],
        )


def initial_state(
    corpus: VectorizedCorpus, initial_keywords, config: LoopConfig
) -> LoopState:
    if not initial_keywords:
        raise ValueError("need at least one initial keyword")
    kind = config.model_kind.lower()
    dims = config.hidden_dims if kind == "mlp" else ()
    # near-uniform start: the first iteration's expectation fusion should
    # see an uninformative model rather than init noise
    model = init_model(kind, dims, corpus.input_dim, seed=config.seed, scale=0.05)
    return LoopState(
        iteration=0,
        keywords=(),
        model=model,
        metrics=(),
        annotations=(),
        pending=tuple(initial_keywords),
    )


@dataclass(frozen=True)
class PlanEntry:
    keyword: str
    matched: frozenset[str]
    sample: tuple[str, ...]


@dataclass(frozen=True)
class IterationPlan:
    iteration: int
    entries: tuple[PlanEntry, ...]
    skipped: tuple[str, ...] = ()


@dataclass(frozen=True)
class SelectionItem:
    """One micropost offered for keyword discovery, with the model's view."""

    id: str
    text: str
    tokens: tuple[str, ...]
    prediction: float
    predicted_class: int
    disagreement: float


@dataclass
class InferenceOutcome:
    records: list[KeywordRecord]
    model: TargetModel
    reports: list[dict]
    selection: list[SelectionItem]


def plan_iteration(
    state: LoopState, corpus: VectorizedCorpus, config: LoopConfig
) -> IterationPlan:
    """Choose this iteration's keywords and their annotation samples."""
    if not state.pending:
        raise VocabularyExhausted("no pending keyword to start an iteration")
    t = state.iteration + 1
    entries: list[PlanEntry] = []
    skipped: list[str] = []
    for k, keyword in enumerate(state.pending):
        if keyword in state.used_keywords:
            raise ValueError(f"keyword {keyword!r} was already processed")
        matched = frozenset(filter_by_keyword(corpus, keyword))
        if not matched:
            skipped.append(keyword)
            continue
        sample = sample_for_annotation(
            matched, config.n_classify, derive_seed(config.seed, t, k)
        )
        entries.append(PlanEntry(keyword, matched, tuple(sample)))
    if not entries:
        raise ValueError(
            f"every pending keyword matches no unlabeled micropost: {list(state.pending)}"
        )
    return IterationPlan(iteration=t, entries=tuple(entries), skipped=tuple(skipped))


def rank_disagreement(
    model: TargetModel, matched, expectation: float, corpus: VectorizedCorpus
) -> list[tuple[str, float]]:
    """(id, |prediction - expectation|) sorted by descending score, then id."""
    matched = sorted(matched)
    if not matched:
        raise ValueError("matched set is empty")
    rows = corpus.unlabeled_rows(matched)
    probs = predict(model, corpus.X_unlabeled[rows])
    scored = [(pid, float(abs(p - expectation))) for pid, p in zip(matched, probs)]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def _metrics_row(
    state_iteration: int,
    keywords_label: str,
    expectations: list[float],
    model: TargetModel,
    corpus: VectorizedCorpus,
    config: LoopConfig,
) -> dict:
    scores = predict(model, corpus.X_test)
    labels = corpus.test_labels
    n_val = max(1, round(config.validation_fraction * labels.size))
    rng = np.random.default_rng(derive_seed(config.seed, 9001))
    val_idx = np.sort(rng.choice(labels.size, size=n_val, replace=False))
    return {
        "iteration": state_iteration,
        "keywords": keywords_label,
        "expectations": [round(e, 6) for e in expectations],
        "auc": auc_pr(scores, labels),
        "accuracy": accuracy(scores, labels),
        "val_auc": auc_pr(scores[val_idx], labels[val_idx])
        if labels[val_idx].sum() > 0
        else 0.0,
        "val_accuracy": accuracy(scores[val_idx], labels[val_idx]),
    }


def run_inference(
    state: LoopState,
    corpus: VectorizedCorpus,
    plan: IterationPlan,
    matrices: dict[str, AnnotationMatrix],
    config: LoopConfig,
) -> InferenceOutcome:
    """Fit expectations for the planned keywords and pick the disagreement set."""
    model = state.model
    frozen = list(state.keywords)
    new_records: list[KeywordRecord] = []
    reports: list[dict] = []
    for entry in plan.entries:
        matrix = matrices[entry.keyword]
        if config.expectation_mode == "majority_vote":
            _, fraction = majority_vote(matrix)
            record = KeywordRecord(entry.keyword, fraction, entry.matched)
            reports.append(
                {
                    "keyword": entry.keyword,
                    "mode": "majority_vote",
                    "expectation": fraction,
                }
            )
        else:
            estimate, _, model, fit_report = joint_fit(
                matrix,
                model,
                corpus,
                frozen + new_records,
                entry.keyword,
                config.training,
                config.joint,
                matched=entry.matched,
            )
            record = KeywordRecord(entry.keyword, estimate.value, entry.matched)
            reports.append(
                {
                    "keyword": entry.keyword,
                    "mode": "joint",
                    "expectation": estimate.value,
                    "crowd_mean": estimate.crowd_mean,
                    "model_mean": estimate.model_mean,
                    **fit_report.to_dict(),
                }
            )
        new_records.append(record)

    # consolidation pass with all expectations frozen
    model = train(model, corpus, frozen + new_records, config.training)

    merged: list[tuple[float, str, str]] = []
    for record in new_records:
        for pid, score in rank_disagreement(
            model, record.matched, record.expectation, corpus
        )[: config.n_discover]:
            merged.append((-score, pid, record.keyword))
    merged.sort()
    selection: list[SelectionItem] = []
    seen_ids: set[str] = set()
    for neg_score, pid, _ in merged:
        if pid in seen_ids:
            continue
        seen_ids.add(pid)
        post = corpus.unlabeled_post(pid)
        p = predict(model, corpus.X_unlabeled[corpus.unlabeled_rows([pid])])
        selection.append(
            SelectionItem(
                id=pid,
                text=post.text,
                tokens=post.tokens,
                prediction=float(p),
                predicted_class=int(p >= 0.5),
                disagreement=-neg_score,
            )
        )
        if len(selection) >= config.n_discover:
            break
    return InferenceOutcome(new_records, model, reports, selection)


def candidate_tokens(selection, used, config: LoopConfig) -> set[str]:
    """Tokens pickable for discovery: present in the selection, not stopwords,
    long enough, and not already used."""
    used = set(used)
    out: set[str] = set()
    for item in selection:
        for token in item.tokens:
            if (
                len(token) >= config.min_token_len
                and token not in STOPWORDS
                and token not in used
            ):
                out.add(token)
    return out


def aggregate_picks(picks, used, top_n: int = 1) -> list[str]:
    """Most frequent unused tokens among the crowd's picks, ties lexicographic."""
    if not picks:
        raise ValueError("no keyword picks were returned")
    used = set(used)
    counts: dict[str, int] = {}
    for token in picks:
        if token in used:
            continue
        counts[token] = counts.get(token, 0) + 1
    if not counts:
        raise VocabularyExhausted("every pick was an already-used keyword")
    ordered = sorted(counts, key=lambda tok: (-counts[tok], tok))
    return ordered[:top_n]


def discover_keywords(selection, backend, used, config: LoopConfig, iteration: int) -> list[str]:
    """Collect picks from the backend and aggregate them into new keywords."""
    candidates = candidate_tokens(selection, used, config)
    if not candidates:
        raise VocabularyExhausted("no candidate token remains in the selection")
    picks = backend.collect_picks(selection, candidates, used, iteration, config.n_picks)
    return aggregate_picks(picks, used, top_n=config.top_n_keywords)


def check_convergence(history, patience: int = 3, min_delta: float = 0.002) -> bool:
    """True when the metric has not improved by >= min_delta for ``patience``
    consecutive entries."""
    history = list(history)
    if not history:
        raise ValueError("metric history is empty")
    best = history[0]
    stale = 0
    for value in history[1:]:
        if value >= best + min_delta:
            best = value
            stale = 0
        else:
            stale += 1
            best = max(best, value)
    return stale >= patience


def finalize_iteration(
    state: LoopState,
    corpus: VectorizedCorpus,
    plan: IterationPlan,
    outcome: InferenceOutcome,
    matrices: dict[str, AnnotationMatrix],
    discovered: list[str],
    config: LoopConfig,
) -> LoopState:
    """Fold one finished iteration into the loop state."""
    row = _metrics_row(
        plan.iteration,
        "+".join(r.keyword for r in outcome.records),
        [r.expectation for r in outcome.records],
        outcome.model,
        corpus,
        config,
    )
    metrics = state.metrics + (row,)
    annotations = state.annotations + tuple(
        {
            "iteration": plan.iteration,
            "keyword": entry.keyword,
            "records": matrices[entry.keyword].to_records(),
        }
        for entry in plan.entries
    )
    val_history = [m["val_auc"] for m in metrics]
    converged = (
        check_convergence(val_history, config.patience, config.min_delta)
        if len(val_history) > 1
        else False
    )
    return replace(
        state,
        iteration=plan.iteration,
        keywords=state.keywords + tuple(outcome.records),
        model=outcome.model,
        metrics=metrics,
        annotations=annotations,
        pending=tuple(discovered),
        converged=converged,
    )


class AnnotatorBackend(Protocol):
    """Where the loop's two human tasks get answered.

    One mode per instance: simulated workers, a scripted replay, or (via the
    task service, which drives the stage functions directly) a real human.
    """

    def collect_labels(self, sample, iteration: int) -> AnnotationMatrix: ...

    def collect_picks(
        self, selection, candidates, used, iteration: int, n_picks: int
    ) -> list[str]: ...


class SimulatedBackend:
    """Annotator backend backed by planted truths and simulated workers."""

    def __init__(self, truths, workers, lexicon, seed: int = 0, redundancy: int = 3):
        self.truths = dict(truths)
        self.workers = list(workers)
        self.lexicon = dict(lexicon)
        self.seed = seed
        self.redundancy = redundancy

    def collect_labels(self, sample, iteration: int) -> AnnotationMatrix:
        """Redundant labels for the sampled ids from a seeded worker assignment."""
        item_truths = {pid: self.truths[pid] for pid in sample}
        r = min(self.redundancy, len(self.workers))
        assign_rng = np.random.default_rng(derive_seed(self.seed, iteration, 101))
        pairs = [
            (m, int(n))
            for m in range(len(sample))
            for n in assign_rng.choice(len(self.workers), size=r, replace=False)
        ]
        return simulate_annotations(
            item_truths,
            self.workers,
            seed=derive_seed(self.seed, iteration, 202),
            pairs=pairs,
        )

    def collect_labels_pairs(self, sample, iteration: int, pairs) -> AnnotationMatrix:
        """Labels for an explicit (item_index, worker_index) assignment."""
        item_truths = {pid: self.truths[pid] for pid in sample}
        return simulate_annotations(
            item_truths,
            self.workers,
            seed=derive_seed(self.seed, iteration, 404),
            pairs=pairs,
        )

    def collect_picks(self, selection, candidates, used, iteration: int, n_picks: int):
        """Each simulated submission picks from the candidate-filtered lexicon."""
        visible = {tok: v for tok, v in self.lexicon.items() if tok in candidates}
        triples = [
            (item, item.prediction, self.truths.get(item.id)) for item in selection
        ]
        picks = []
        for k in range(n_picks):
            picks.append(
                simulate_keyword_pick(
                    triples, visible, used, seed=derive_seed(self.seed, iteration, 303, k)
                )
            )
        return picks


class ScriptedBackend:
    """Replays fixed label records and keyword picks, one batch per call.

    Labels are (item_id, worker_id, label) triples grouped per keyword in
    call order; picks are token lists in call order. Used for path
    equivalence between the in-process loop and the task service.
    """

    def __init__(self, label_batches, pick_batches):
        self._labels = list(label_batches)
        self._picks = list(pick_batches)

    def collect_labels(self, sample, iteration: int) -> AnnotationMatrix:
        if not self._labels:
            raise RuntimeError("scripted backend ran out of label batches")
        records = self._labels.pop(0)
        matrix = AnnotationMatrix.from_records(records)
        if set(matrix.item_ids) != set(sample):
            raise ValueError("scripted labels do not cover the planned sample")
        return matrix

    def collect_picks(self, selection, candidates, used, iteration: int, n_picks: int):
        if not self._picks:
            raise RuntimeError("scripted backend ran out of pick batches")
        return self._picks.pop(0)


def run_iteration(
    state: LoopState,
    corpus: VectorizedCorpus,
    backend,
    config: LoopConfig,
    keyword_plan=None,
) -> LoopState:
    """One full iteration against a backend; returns the successor state.

    ``keyword_plan`` optionally replaces crowd keyword discovery with a
    predetermined queue (used by the query-expansion baseline).
    """
    plan = plan_iteration(state, corpus, config)
    matrices = {
        entry.keyword: backend.collect_labels(list(entry.sample), plan.iteration)
        for entry in plan.entries
    }
    outcome = run_inference(state, corpus, plan, matrices, config)
    used = state.used_keywords | {r.keyword for r in outcome.records}
    if keyword_plan is not None:
        discovered = [k for k in keyword_plan if k not in used][: config.top_n_keywords]
    else:
        try:
            discovered = discover_keywords(
                outcome.selection, backend, used, config, plan.iteration
            )
        except VocabularyExhausted:
            discovered = []
    next_state = finalize_iteration(
        state, corpus, plan, outcome, matrices, discovered, config
    )
    if not discovered:
        next_state = replace(next_state, exhausted=True)
    return next_state


def run_loop(
    corpus: VectorizedCorpus,
    initial_keywords,
    backend,
    config: LoopConfig,
    out_dir=None,
    keyword_plan=None,
) -> list[LoopState]:
    """Iterate until convergence, keyword exhaustion, or the iteration cap.

    Returns the list of states after each iteration (history). When
    ``out_dir`` is given, a replayable run directory is written as the loop
    progresses.
    """
    state = initial_state(corpus, initial_keywords, config)
    writer = RunDirectoryWriter(out_dir, initial_keywords, config) if out_dir else None
    history: list[LoopState] = []
    while (
        state.iteration < config.max_iterations
        and not state.converged
        and not state.exhausted
        and state.pending
    ):
        plan = plan_iteration(state, corpus, config)
        matrices = {
            entry.keyword: backend.collect_labels(list(entry.sample), plan.iteration)
            for entry in plan.entries
        }
        outcome = run_inference(state, corpus, plan, matrices, config)
        used = state.used_keywords | {r.keyword for r in outcome.records}
        if keyword_plan is not None:
            discovered = [k for k in keyword_plan if k not in used][: config.top_n_keywords]
        else:
            try:
                discovered = discover_keywords(
                    outcome.selection, backend, used, config, plan.iteration
                )
            except VocabularyExhausted:
                discovered = []
        state = finalize_iteration(
            state, corpus, plan, outcome, matrices, discovered, config
        )
        if not discovered:
            state = replace(state, exhausted=True)
        history.append(state)
        if writer:
            writer.write_iteration(state, plan, outcome, matrices, discovered, corpus)
    if writer:
        writer.write_final(state)
    return history


def loop_config_fingerprint(config: LoopConfig, initial_keywords) -> str:
    payload = {
        "config": _config_dict(config),
        "initial_keywords": list(initial_keywords),
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()[:12]


def _config_dict(config: LoopConfig) -> dict:
    out = {}
    for name in (
        "model_kind hidden_dims n_classify n_discover redundancy n_picks "
        "top_n_keywords max_iterations patience min_delta validation_fraction "
        "min_token_len expectation_mode seed"
    ).split():
        value = getattr(config, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    out["training"] = {
        k: getattr(config.training, k)
        for k in (
            "regularization_strength prior_scale learning_rate adam_beta1 adam_beta2 "
            "adam_epsilon max_epochs batch_size unlabeled_negative_weight seed"
        ).split()
    }
    out["joint"] = {
        k: getattr(config.joint, k)
        for k in (
            "max_rounds gradient_steps likelihood_tol expectation_tol smoothing"
        ).split()
    }
    return out


class RunDirectoryWriter:
    """Writes the replayable per-iteration layout of a loop run."""

    def __init__(self, out_dir, initial_keywords, config: LoopConfig):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        manifest = {
            "config": _config_dict(config),
            "initial_keywords": list(initial_keywords),
            "fingerprint": loop_config_fingerprint(config, initial_keywords),
        }
        self._dump(self.root / "manifest.json", manifest)

    @staticmethod
    def _dump(path: Path, payload) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")

    def write_iteration(self, state, plan, outcome, matrices, discovered, corpus) -> None:
        sub = self.root / f"iteration_{plan.iteration:03d}"
        sub.mkdir(exist_ok=True)
        with open(sub / "annotations.jsonl", "w", encoding="utf-8") as fh:
            for entry in plan.entries:
                for item_id, worker_id, label in matrices[entry.keyword].to_records():
                    fh.write(
                        json.dumps(
                            {
                                "keyword": entry.keyword,
                                "item_id": item_id,
                                "worker_id": worker_id,
                                "label": label,
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
        self._dump(sub / "fit_report.json", outcome.reports)
        save_checkpoint(outcome.model, sub / "checkpoint.json", corpus.vocab.content_hash())
        self._dump(sub / "metrics.json", state.metrics[-1])
        self._dump(
            sub / "discovery.json",
            {
                "selection": [item.id for item in outcome.selection],
                "discovered": list(discovered),
            },
        )

    def write_final(self, state: LoopState) -> None:
        self._dump(
            self.root / "history.json",
            {
                "iterations": state.iteration,
                "converged": state.converged,
                "exhausted": state.exhausted,
                "keywords": [
                    {"keyword": r.keyword, "expectation": r.expectation}
                    for r in state.keywords
                ],
                "metrics": list(state.metrics),
            },
        )


def load_embedding_table(path) -> dict[str, np.ndarray]:
    """Parse a `token v1 v2 ... vd` per-line embedding table."""
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise ValueError(f"embedding table line {lineno}: expected {dim} values")
            table[token] = np.asarray([float(v) for v in values])
    if not table:
        raise ValueError("embedding table is empty")
    return table


def qe_baseline_expand(keyword: str, table: dict[str, np.ndarray], top_k: int) -> list[str]:
    """Nearest tokens to the keyword by cosine similarity, ties lexicographic."""
    if keyword not in table:
        raise KeyError(f"keyword {keyword!r} missing from the embedding table")
    query = table[keyword]
    qnorm = float(np.linalg.norm(query))
    scored = []
    for token, vec in table.items():
        if token == keyword:
            continue
        denom = qnorm * float(np.linalg.norm(vec))
        sim = float(query @ vec / denom) if denom > 0 else 0.0
        scored.append((-sim, token))
    scored.sort()
    return [token for _, token in scored[:top_k]]
