"""Weakly supervised training with a keyword expectation.

Builds a small planted corpus, trains logistic regression from positive
examples only, and shows how the expectation regularizer steers the model's
mean prediction on keyword-matched microposts toward the planted value.
"""

from keywordloop.corpus import VectorizedCorpus, build_vocabulary, filter_by_keyword
from keywordloop.eval_harness.metrics import accuracy, auc_pr
from keywordloop.eval_harness.synthetic import SyntheticSpec, generate_synthetic_corpus
from keywordloop.target_model import (
    KeywordRecord,
    TrainingConfig,
    init_model,
    model_expectation,
    predict,
    train,
)

spec = SyntheticSpec(n_positive=80, n_unlabeled=1500, n_test=400, seed=42)
world = generate_synthetic_corpus(spec)
vocab = build_vocabulary(world.corpus, min_frequency=2)
corpus = VectorizedCorpus(world.corpus, vocab)

matched = frozenset(filter_by_keyword(corpus, "hack"))
print(f"corpus sizes {world.corpus.sizes()}, vocabulary {len(vocab)} tokens")
print(f"'hack' matches {len(matched)} unlabeled microposts; planted expectation 0.20")

for strength in (0.0, 100.0, None):  # None resolves to 10 x #labeled
    config = TrainingConfig(
        regularization_strength=strength,
        learning_rate=0.05,
        max_epochs=400,
        seed=1,
    )
    model = init_model("lr", [], corpus.input_dim, seed=1, scale=0.05)
    record = KeywordRecord("hack", 0.20, matched)
    fitted = train(model, corpus, [record], config)
    mean = model_expectation(fitted, matched, corpus)
    scores = predict(fitted, corpus.X_test)
    label = "10x#labeled" if strength is None else str(strength)
    print(
        f"strength={label:>11s}: mean prediction on matched={mean:.3f}  "
        f"test AUC-PR={auc_pr(scores, corpus.test_labels):.3f}  "
        f"accuracy={accuracy(scores, corpus.test_labels):.3f}"
    )

print()
print("with no regularization the positive-only likelihood drifts the matched")
print("mean to 1.0; the regularizer pins it near the planted 0.20.")
print("one keyword alone constrains only 11% of the pool, which is exactly")
print("why the loop keeps discovering more keywords (see 03_full_loop.py)")
