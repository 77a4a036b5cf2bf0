"""Synthetic micropost corpora with planted keyword expectations.

Every generated token family has a controllable relationship to the planted
relevance label: informative tokens are injected into posts at
class-conditional rates chosen so that, among unlabeled posts containing a
token, the relevant fraction equals its planted expectation; background
tokens are class-neutral filler. The generator also emits the planted truth
tables a simulated crowd needs: per-post labels, a token informativeness
lexicon, and a worker pool.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from ..corpus import Corpus, Micropost, tokenize
from ..crowd_model import SimulatedWorker, worker_pool


class InfeasibleSpec(ValueError):
    """Planted expectations cannot be realized under the given class balance."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a planted corpus.

    ``planted_expectations`` are named keywords (typically the loop's
    starting keyword) with their exact relevant fraction among matching
    posts. ``n_event_tokens`` additional discoverable tokens get
    expectations drawn from ``event_expectation_range`` and occurrence
    rates from ``event_match_rate_range``.
    """

    n_positive: int = 150
    n_unlabeled: int = 2000
    n_test: int = 500
    class_balance: float = 0.25
    planted_expectations: dict[str, float] = field(
        default_factory=lambda: {"hack": 0.2}
    )
    keyword_match_rate: float = 0.12
    n_event_tokens: int = 16
    event_expectation_range: tuple[float, float] = (0.8, 0.95)
    event_match_rate_range: tuple[float, float] = (0.02, 0.06)
    n_background_tokens: int = 120
    tokens_per_post: int = 9
    # positives come from a few seed events and cover only this share of the
    # event-token families; the rest must be found through keyword discovery
    seed_topic_fraction: float = 0.4
    n_workers: int = 5
    worker_accuracy_range: tuple[float, float] = (0.85, 0.85)
    adversarial_workers: int = 0
    adversarial_accuracy: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_positive, self.n_unlabeled, self.n_test) < 1:
            raise ValueError("all corpus sizes must be >= 1")
        if not 0.0 < self.class_balance < 1.0:
            raise ValueError("class_balance must lie strictly inside (0, 1)")
        for token, e in self.planted_expectations.items():
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"planted expectation for {token!r} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticWorld:
    """A generated corpus plus the planted tables driving simulation."""

    spec: SyntheticSpec
    corpus: Corpus
    truths: dict[str, int]  # unlabeled id -> planted label
    lexicon: dict[str, float]  # informative token -> planted expectation
    workers: list[SimulatedWorker]

    def truth_of(self, post_id: str) -> int:
        return self.truths[post_id]

    def dump_truths(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for post_id in sorted(self.truths):
                fh.write(json.dumps({"id": post_id, "label": self.truths[post_id]}) + "\n")

    def dump_lexicon(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.lexicon, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _conditional_rates(expectation: float, match_rate: float, balance: float):
    """Class-conditional inclusion rates hitting the planted expectation.

    Solves P(relevant | token) = expectation with overall occurrence
    ``match_rate``: p1 = e*rho/beta for relevant posts, p0 = (1-e)*rho/(1-beta)
    for irrelevant ones.
    """
    p1 = expectation * match_rate / balance
    p0 = (1.0 - expectation) * match_rate / (1.0 - balance)
    if p1 > 1.0 or p0 > 1.0:
        raise InfeasibleSpec(
            f"expectation {expectation} with match rate {match_rate} is unreachable "
            f"at class balance {balance}: conditional rates ({p1:.3f}, {p0:.3f})"
        )
    return p1, p0


def _planted_tokens(spec: SyntheticSpec, rng: np.random.Generator):
    """(token, expectation, p1, p0) for every informative token."""
    rows = []
    for token in sorted(spec.planted_expectations):
        e = spec.planted_expectations[token]
        p1, p0 = _conditional_rates(e, spec.keyword_match_rate, spec.class_balance)
        rows.append((token, e, p1, p0))
    lo_e, hi_e = spec.event_expectation_range
    lo_r, hi_r = spec.event_match_rate_range
    for k in range(spec.n_event_tokens):
        token = f"topic{k + 1:02d}"
        e = float(rng.uniform(lo_e, hi_e))
        rate = float(rng.uniform(lo_r, hi_r))
        p1, p0 = _conditional_rates(e, rate, spec.class_balance)
        rows.append((token, e, p1, p0))
    return rows


def _compose_posts(
    n: int,
    labels: np.ndarray,
    planted,
    spec: SyntheticSpec,
    rng: np.random.Generator,
    allowed: set[str] | None = None,
) -> list[list[str]]:
    """Token lists: planted tokens by class-conditional coin flips, then filler."""
    bg_tokens = [f"word{k + 1:03d}" for k in range(spec.n_background_tokens)]
    bg_weights = 1.0 / (np.arange(spec.n_background_tokens) + 2.0)
    bg_weights /= bg_weights.sum()

    included = {}
    for token, _, p1, p0 in planted:
        if allowed is not None and token not in allowed:
            continue
        rates = np.where(labels == 1, p1, p0)
        included[token] = rng.random(n) < rates

    posts: list[list[str]] = [[] for _ in range(n)]
    for token, flags in included.items():
        for i in np.flatnonzero(flags):
            posts[i].append(token)
    # filler count is class-independent so raw token counts carry no label
    # signal; informative tokens ride on top of the same background length
    filler = rng.choice(len(bg_tokens), size=n * spec.tokens_per_post, p=bg_weights)
    for i in range(n):
        chunk = filler[i * spec.tokens_per_post : (i + 1) * spec.tokens_per_post]
        posts[i].extend(bg_tokens[j] for j in chunk)
        rng.shuffle(posts[i])
    return posts


def generate_synthetic_corpus(spec: SyntheticSpec) -> SyntheticWorld:
    """Draw a corpus whose keyword-conditional relevance follows the spec.

    Positives are relevant posts by construction; unlabeled and test posts
    draw their label from the class balance. Returns the corpus together
    with the planted truth tables and worker pool for simulation.
    """
    rng = np.random.default_rng(spec.seed)
    planted = _planted_tokens(spec, rng)
    lexicon = {token: e for token, e, _, _ in planted}

    pos_labels = np.ones(spec.n_positive, dtype=np.int64)
    unl_labels = (rng.random(spec.n_unlabeled) < spec.class_balance).astype(np.int64)
    test_labels = (rng.random(spec.n_test) < spec.class_balance).astype(np.int64)

    topic_names = [t for t, _, _, _ in planted if t.startswith("topic")]
    n_seed = max(1, round(spec.seed_topic_fraction * len(topic_names))) if topic_names else 0
    seed_allowed = set(spec.planted_expectations) | set(topic_names[:n_seed])

    pos_posts = _compose_posts(
        spec.n_positive, pos_labels, planted, spec, rng, allowed=seed_allowed
    )
    unl_posts = _compose_posts(spec.n_unlabeled, unl_labels, planted, spec, rng)
    test_posts = _compose_posts(spec.n_test, test_labels, planted, spec, rng)

    def build(prefix: str, token_lists) -> list[Micropost]:
        out = []
        for i, tokens in enumerate(token_lists):
            text = " ".join(tokens)
            out.append(Micropost(id=f"{prefix}{i + 1:06d}", text=text, tokens=tokenize(text)))
        return out

    positives = build("p", pos_posts)
    unlabeled = build("u", unl_posts)
    test = list(zip(build("t", test_posts), (int(l) for l in test_labels)))

    truths = {post.id: int(label) for post, label in zip(unlabeled, unl_labels)}

    accuracies = [
        float(a)
        for a in rng.uniform(
            spec.worker_accuracy_range[0],
            spec.worker_accuracy_range[1],
            size=spec.n_workers,
        )
    ]
    accuracies += [spec.adversarial_accuracy] * spec.adversarial_workers
    workers = worker_pool(accuracies, seed=spec.seed)

    corpus = Corpus(tuple(positives), tuple(unlabeled), tuple(test))
    return SyntheticWorld(spec, corpus, truths, lexicon, workers)


def spec_fingerprint(spec: SyntheticSpec) -> str:
    canon = json.dumps(spec.to_dict(), sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
