"""The complete human-AI loop with simulated annotators.

Starts from the single keyword 'hack', then alternates crowd labeling,
joint expectation inference, model training, and disagreement-driven
keyword discovery. Prints the per-iteration metric table and the keyword
trail the loop followed.
"""

from keywordloop.eval_harness.experiments import make_backend, prepare_world
from keywordloop.eval_harness.synthetic import SyntheticSpec
from keywordloop.loop_engine import LoopConfig, run_loop
from keywordloop.target_model import TrainingConfig

spec = SyntheticSpec(seed=11, n_unlabeled=4000, n_test=500)
world, corpus = prepare_world(spec)
config = LoopConfig(
    seed=11,
    model_kind="lr",
    training=TrainingConfig(learning_rate=0.02, seed=11),
)
backend = make_backend(world, config)

print(f"unlabeled pool {spec.n_unlabeled}, {spec.n_event_tokens} discoverable "
      f"topic tokens, workers at accuracy {spec.worker_accuracy_range[0]}")
print()
history = run_loop(corpus, ["hack"], backend, config)

print(f"{'iter':>4}  {'keyword':>10}  {'e':>6}  {'AUC-PR':>7}  {'accuracy':>8}")
for state in history:
    row = state.metrics[-1]
    print(
        f"{row['iteration']:>4}  {row['keywords']:>10}  "
        f"{row['expectations'][0]:>6.3f}  {100 * row['auc']:>7.2f}  "
        f"{100 * row['accuracy']:>8.2f}"
    )

final = history[-1]
print()
print("keyword trail:", " -> ".join(r.keyword for r in final.keywords))
informative = {t for t in world.lexicon if t.startswith("topic")}
found = {r.keyword for r in final.keywords} & informative
print(f"discovered {len(found)} of {len(informative)} planted informative tokens")
print(f"converged={final.converged} exhausted={final.exhausted}")
