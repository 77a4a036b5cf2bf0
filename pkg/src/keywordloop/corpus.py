"""Micropost ingestion: tokenization, vocabulary, bag-of-words, keyword filtering.

Corpus files are UTF-8 JSON-lines, one flat object per line with fields
``id``, ``text``, ``split`` in {"positive", "unlabeled", "test"} and, for
test records only, ``label`` in {0, 1}.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_TOKEN_RE = re.compile(r"[a-z0-9]+")

SPLITS = ("positive", "unlabeled", "test")


class CorpusError(ValueError):
    """Raised for malformed corpus files or inconsistent corpus contents."""


@dataclass(frozen=True)
class Micropost:
    """A single short text with its tokenization and optional bag-of-words.

    ``bow`` maps vocabulary index to count and is attached once a vocabulary
    exists (see :func:`vectorize_corpus`); it is ``None`` straight after
    loading.
    """

    id: str
    text: str
    tokens: tuple[str, ...]
    bow: dict[int, int] | None = None


@dataclass(frozen=True)
class Corpus:
    """Positively labeled, unlabeled, and held-out test microposts.

    The three splits are pairwise disjoint by micropost id.
    """

    positives: tuple[Micropost, ...]
    unlabeled: tuple[Micropost, ...]
    test: tuple[tuple[Micropost, int], ...]

    def __post_init__(self) -> None:
        if not self.positives:
            raise CorpusError("corpus has an empty positive set")
        seen: set[str] = set()
        for post in self.iter_all():
            if post.id in seen:
                raise CorpusError(f"duplicate micropost id {post.id!r}")
            seen.add(post.id)
        for _, label in self.test:
            if label not in (0, 1):
                raise CorpusError(f"test label must be 0 or 1, got {label!r}")

    def iter_all(self):
        yield from self.positives
        yield from self.unlabeled
        for post, _ in self.test:
            yield post

    def sizes(self) -> tuple[int, int, int]:
        return len(self.positives), len(self.unlabeled), len(self.test)


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token/index mapping over tokens meeting a frequency floor.

    Indices are assigned by descending corpus frequency, ties broken by
    lexicographic token order, so vocabularies are reproducible.
    """

    tokens: tuple[str, ...]
    frequencies: tuple[int, ...]
    min_frequency: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def index(self) -> dict[str, int]:
        return self._index  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def export(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.export_text())

    def export_text(self) -> str:
        lines = [
            f"{i}\t{tok}\t{freq}"
            for i, (tok, freq) in enumerate(zip(self.tokens, self.frequencies))
        ]
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.export_text().encode("utf-8")).hexdigest()

    @classmethod
    def load(cls, path, min_frequency: int = 1) -> "Vocabulary":
        tokens: list[str] = []
        freqs: list[int] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise CorpusError(f"vocabulary line {lineno}: expected 3 fields")
                idx, tok, freq = parts
                if int(idx) != len(tokens):
                    raise CorpusError(f"vocabulary line {lineno}: index out of order")
                tokens.append(tok)
                freqs.append(int(freq))
        return cls(tuple(tokens), tuple(freqs), min_frequency)


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase alphanumeric tokens with tweet noise removed.

    URLs and @-mentions are deleted before splitting; '#' acts as a token
    separator so hashtags keep their word; the retweet marker "rt" is
    dropped. Idempotent over space-joined output.
    """
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    tokens = _TOKEN_RE.findall(text.lower())
    return tuple(t for t in tokens if t != "rt")


def load_corpus(path, format: str = "jsonl") -> Corpus:
    """Parse a corpus file into disjoint positive/unlabeled/test splits.

    Raises :class:`CorpusError` with the offending line number for malformed
    records, unknown split tags, duplicate ids, or an empty positive set.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    positives: list[Micropost] = []
    unlabeled: list[Micropost] = []
    test: list[tuple[Micropost, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"line {lineno}: record must be an object")
            try:
                post_id = record["id"]
                text = record["text"]
                split = record["split"]
            except KeyError as exc:
                raise CorpusError(f"line {lineno}: missing field {exc.args[0]!r}") from exc
            if not isinstance(post_id, str) or not isinstance(text, str):
                raise CorpusError(f"line {lineno}: id and text must be strings")
            if split not in SPLITS:
                raise CorpusError(f"line {lineno}: unknown split tag {split!r}")
            post = Micropost(id=post_id, text=text, tokens=tokenize(text))
            if split == "test":
                if record.get("label") not in (0, 1):
                    raise CorpusError(f"line {lineno}: test record needs label 0 or 1")
                test.append((post, int(record["label"])))
            else:
                if "label" in record:
                    raise CorpusError(f"line {lineno}: label only allowed on test records")
                (positives if split == "positive" else unlabeled).append(post)
    if not positives:
        raise CorpusError("corpus file contains no positive records")
    return Corpus(tuple(positives), tuple(unlabeled), tuple(test))


def dump_corpus(corpus: Corpus, path) -> None:
    """Write a corpus back to the JSON-lines interchange format."""
    with open(path, "w", encoding="utf-8") as fh:
        for post in corpus.positives:
            fh.write(json.dumps({"id": post.id, "text": post.text, "split": "positive"}) + "\n")
        for post in corpus.unlabeled:
            fh.write(json.dumps({"id": post.id, "text": post.text, "split": "unlabeled"}) + "\n")
        for post, label in corpus.test:
            fh.write(
                json.dumps({"id": post.id, "text": post.text, "split": "test", "label": label})
                + "\n"
            )


def build_vocabulary(corpus: Corpus, min_frequency: int = 2) -> Vocabulary:
    """Vocabulary over positives and unlabeled only; test tokens never leak in."""
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")
    counts: Counter[str] = Counter()
    for post in corpus.positives:
        counts.update(post.tokens)
    for post in corpus.unlabeled:
        counts.update(post.tokens)
    kept = [(tok, freq) for tok, freq in counts.items() if freq >= min_frequency]
    if not kept:
        raise CorpusError(f"no token reaches min_frequency={min_frequency}")
    kept.sort(key=lambda item: (-item[1], item[0]))
    tokens, freqs = zip(*kept)
    return Vocabulary(tokens, freqs, min_frequency)


def vectorize(tokens, vocab: Vocabulary) -> dict[int, int]:
    """Sparse bag-of-words counts; out-of-vocabulary tokens are dropped."""
    bow: dict[int, int] = {}
    index = vocab.index
    for tok in tokens:
        idx = index.get(tok)
        if idx is not None:
            bow[idx] = bow.get(idx, 0) + 1
    return bow


def vectorize_corpus(corpus: Corpus, vocab: Vocabulary) -> Corpus:
    """Return a copy of the corpus with bag-of-words maps attached."""

    def attach(post: Micropost) -> Micropost:
        return replace(post, bow=vectorize(post.tokens, vocab))

    return Corpus(
        tuple(attach(p) for p in corpus.positives),
        tuple(attach(p) for p in corpus.unlabeled),
        tuple((attach(p), label) for p, label in corpus.test),
    )


def bow_matrix(posts, vocab: Vocabulary) -> sp.csr_matrix:
    """Stack bag-of-words rows for ``posts`` into a CSR count matrix."""
    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    for post in posts:
        bow = post.bow if post.bow is not None else vectorize(post.tokens, vocab)
        for idx in sorted(bow):
            indices.append(idx)
            data.append(bow[idx])
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int32), indptr),
        shape=(len(indptr) - 1, len(vocab)),
    )


class VectorizedCorpus:
    """A corpus plus its vocabulary and precomputed bag-of-words matrices.

    This is the working representation consumed by model training and the
    loop: row-indexed CSR matrices for each split and id/row lookup tables.
    Immutable after construction; safe for concurrent reads.
    """

    def __init__(self, corpus: Corpus, vocab: Vocabulary):
        self.corpus = vectorize_corpus(corpus, vocab)
        self.vocab = vocab
        self.positive_ids = tuple(p.id for p in self.corpus.positives)
        self.unlabeled_ids = tuple(p.id for p in self.corpus.unlabeled)
        self.test_ids = tuple(p.id for p, _ in self.corpus.test)
        self.X_positive = bow_matrix(self.corpus.positives, vocab)
        self.X_unlabeled = bow_matrix(self.corpus.unlabeled, vocab)
        self.X_test = bow_matrix([p for p, _ in self.corpus.test], vocab)
        self.test_labels = np.asarray([label for _, label in self.corpus.test], dtype=np.int64)
        self._unlabeled_row = {pid: row for row, pid in enumerate(self.unlabeled_ids)}
        self._token_rows: dict[str, tuple[int, ...]] = {}

    @property
    def input_dim(self) -> int:
        return len(self.vocab)

    def unlabeled_rows(self, ids) -> np.ndarray:
        """Rows into ``X_unlabeled`` for the given unlabeled ids (sorted by id)."""
        try:
            return np.asarray([self._unlabeled_row[i] for i in sorted(ids)], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"id {exc.args[0]!r} is not an unlabeled micropost") from exc

    def unlabeled_post(self, post_id: str) -> Micropost:
        return self.corpus.unlabeled[self._unlabeled_row[post_id]]

    def matched_rows(self, keyword: str) -> tuple[int, ...]:
        """Cached unlabeled row indices whose token list contains ``keyword``."""
        rows = self._token_rows.get(keyword)
        if rows is None:
            rows = tuple(
                row
                for row, post in enumerate(self.corpus.unlabeled)
                if keyword in post.tokens
            )
            self._token_rows[keyword] = rows
        return rows


def filter_by_keyword(corpus: Corpus | VectorizedCorpus, keyword: str) -> set[str]:
    """Ids of unlabeled microposts whose token list contains ``keyword`` exactly."""
    if not keyword or len(tokenize(keyword)) != 1 or tokenize(keyword)[0] != keyword:
        raise ValueError(f"keyword must be a single normalized token, got {keyword!r}")
    if isinstance(corpus, VectorizedCorpus):
        rows = corpus.matched_rows(keyword)
        return {corpus.unlabeled_ids[r] for r in rows}
    return {post.id for post in corpus.unlabeled if keyword in post.tokens}


def sample_for_annotation(pool, m: int, seed: int) -> list[str]:
    """Uniform sample without replacement of min(m, |pool|) ids, fixed by seed.

    The pool is sorted before sampling so the draw depends only on its
    contents, never on set iteration order.
    """
    if m < 1:
        raise ValueError("sample size m must be >= 1")
    ordered = sorted(pool)
    if not ordered:
        raise ValueError("cannot sample from an empty pool")
    if m >= len(ordered):
        return ordered
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(ordered), size=m, replace=False)
    return [ordered[i] for i in picked]
