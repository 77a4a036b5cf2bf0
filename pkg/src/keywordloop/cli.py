"""Command-line entry point.

Commands: ``gen-data`` (synthetic corpus + planted tables), ``train``
(single-keyword baseline), ``run-loop`` (simulated annotators), ``experiment``
(q1|q2|q3|q4), ``serve`` (HTTP task service for a human annotator), and
``evaluate`` (checkpoint against a test file). Configuration is a flat JSON
object; ``--set key=value`` overrides individual entries.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import VectorizedCorpus, build_vocabulary, filter_by_keyword, load_corpus
from .crowd_model import ConfusionMatrix, SimulatedWorker
from .eval_harness.experiments import (
    run_experiment_q1,
    run_experiment_q2,
    run_experiment_q3,
    run_experiment_q4,
)
from .eval_harness.metrics import accuracy, auc_pr
from .eval_harness.synthetic import SyntheticSpec, SyntheticWorld, generate_synthetic_corpus
from .joint_inference import JointConfig
from .loop_engine import (
    LoopConfig,
    SimulatedBackend,
    load_embedding_table,
    run_loop,
)
from .target_model import (
    KeywordRecord,
    TrainingConfig,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .corpus import dump_corpus

TRAINING_KEYS = (
    "regularization_strength prior_scale learning_rate adam_beta1 adam_beta2 "
    "adam_epsilon max_epochs batch_size unlabeled_negative_weight"
).split()
JOINT_KEYS = "max_rounds gradient_steps likelihood_tol expectation_tol smoothing".split()
LOOP_KEYS = (
    "model_kind hidden_dims n_classify n_discover redundancy n_picks "
    "top_n_keywords max_iterations patience min_delta validation_fraction "
    "min_token_len expectation_mode"
).split()
SYNTHETIC_KEYS = (
    "n_positive n_unlabeled n_test class_balance planted_expectations "
    "keyword_match_rate n_event_tokens event_expectation_range "
    "event_match_rate_range n_background_tokens tokens_per_post "
    "seed_topic_fraction n_workers worker_accuracy_range adversarial_workers "
    "adversarial_accuracy"
).split()


def load_flat_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise ValueError(f"{path}: config must be a flat JSON object")
    return config


def apply_overrides(config: dict, pairs) -> dict:
    config = dict(config)
    for pair in pairs or ():
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        try:
            config[key] = json.loads(raw)
        except json.JSONDecodeError:
            config[key] = raw
    return config


def _tupled(value):
    return tuple(value) if isinstance(value, list) else value


def training_config_from(flat: dict, seed: int) -> TrainingConfig:
    kwargs = {k: flat[k] for k in TRAINING_KEYS if k in flat}
    return TrainingConfig(seed=seed, **kwargs)


def joint_config_from(flat: dict) -> JointConfig:
    kwargs = {
        k: _tupled(flat[f"joint_{k}"]) for k in JOINT_KEYS if f"joint_{k}" in flat
    }
    return JointConfig(**kwargs)


def loop_config_from(flat: dict, seed: int) -> LoopConfig:
    kwargs = {k: _tupled(flat[k]) for k in LOOP_KEYS if k in flat}
    return LoopConfig(
        seed=seed,
        training=training_config_from(flat, seed),
        joint=joint_config_from(flat),
        **kwargs,
    )


def synthetic_spec_from(flat: dict, seed: int) -> SyntheticSpec:
    kwargs = {
        k: _tupled(flat[f"synthetic_{k}"])
        for k in SYNTHETIC_KEYS
        if f"synthetic_{k}" in flat
    }
    return SyntheticSpec(seed=seed, **kwargs)


def initial_keywords_from(flat: dict, spec: SyntheticSpec | None) -> list[str]:
    if "initial_keywords" in flat:
        return list(flat["initial_keywords"])
    if spec is not None:
        return sorted(spec.planted_expectations)
    raise ValueError("config needs initial_keywords")


def dump_workers(workers, path) -> None:
    payload = [
        {"worker_id": w.worker_id, "matrix": w.confusion.matrix.tolist()}
        for w in workers
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_workers(path) -> list[SimulatedWorker]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return [
        SimulatedWorker(ConfusionMatrix(w["worker_id"], np.asarray(w["matrix"])))
        for w in payload
    ]


def load_truths(path) -> dict[str, int]:
    truths = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                truths[rec["id"]] = int(rec["label"])
    return truths


def _resolve_world(flat: dict, seed: int, min_frequency: int = 2):
    """World + vectorized corpus from files when given, else from the spec."""
    if "corpus_file" in flat:
        corpus = load_corpus(flat["corpus_file"])
        truths = load_truths(flat["truths_file"])
        with open(flat["lexicon_file"], encoding="utf-8") as fh:
            lexicon = json.load(fh)
        workers = load_workers(flat["workers_file"])
        spec = None
        world = SyntheticWorld(SyntheticSpec(seed=seed), corpus, truths, lexicon, workers)
    else:
        spec = synthetic_spec_from(flat, seed)
        world = generate_synthetic_corpus(spec)
    vocab = build_vocabulary(world.corpus, min_frequency=flat.get("min_frequency", min_frequency))
    return world, VectorizedCorpus(world.corpus, vocab), spec


def cmd_gen_data(args) -> int:
    flat = apply_overrides(load_flat_config(args.config) if args.config else {}, args.set)
    spec = synthetic_spec_from(flat, args.seed)
    world = generate_synthetic_corpus(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_corpus(world.corpus, out / "corpus.jsonl")
    world.dump_truths(out / "truths.jsonl")
    world.dump_lexicon(out / "lexicon.json")
    dump_workers(world.workers, out / "workers.json")
    vocab = build_vocabulary(world.corpus, min_frequency=flat.get("min_frequency", 2))
    vocab.export(out / "vocabulary.tsv")
    print(f"wrote corpus {world.corpus.sizes()} and planted tables to {out}")
    return 0


def cmd_train(args) -> int:
    flat = apply_overrides(load_flat_config(args.config) if args.config else {}, args.set)
    world, vcorpus, spec = _resolve_world(flat, args.seed)
    keywords = initial_keywords_from(flat, spec)
    training = training_config_from(flat, args.seed)
    records = []
    for keyword in keywords:
        matched = frozenset(filter_by_keyword(vcorpus, keyword))
        if not matched:
            print(f"keyword {keyword!r} matches nothing; skipped", file=sys.stderr)
            continue
        expectation = flat.get("expectations", {}).get(
            keyword, world.lexicon.get(keyword, 0.5)
        )
        records.append(KeywordRecord(keyword, expectation, matched))
    loop = loop_config_from(flat, args.seed)
    dims = loop.hidden_dims if loop.model_kind == "mlp" else ()
    model = init_model(loop.model_kind, dims, vcorpus.input_dim, seed=args.seed, scale=0.05)
    model = train(model, vcorpus, records, training)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.json", vcorpus.vocab.content_hash())
    scores = predict(model, vcorpus.X_test)
    metrics = {
        "auc": round(100.0 * auc_pr(scores, vcorpus.test_labels), 2),
        "accuracy": round(100.0 * accuracy(scores, vcorpus.test_labels), 2),
        "keywords": [[r.keyword, r.expectation] for r in records],
    }
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_run_loop(args) -> int:
    flat = apply_overrides(load_flat_config(args.config) if args.config else {}, args.set)
    world, vcorpus, spec = _resolve_world(flat, args.seed)
    config = loop_config_from(flat, args.seed)
    keywords = initial_keywords_from(flat, spec)
    backend = SimulatedBackend(
        world.truths,
        world.workers,
        world.lexicon,
        seed=args.seed,
        redundancy=config.redundancy,
    )
    keyword_plan = None
    if "embedding_table_file" in flat:
        table = load_embedding_table(flat["embedding_table_file"])
        keyword_plan = []
        for keyword in keywords:
            from .loop_engine import qe_baseline_expand

            keyword_plan.extend(qe_baseline_expand(keyword, table, config.max_iterations))
    history = run_loop(
        vcorpus, keywords, backend, config, out_dir=args.out, keyword_plan=keyword_plan
    )
    final = history[-1].metrics[-1]
    print(
        f"loop finished after {history[-1].iteration} iterations: "
        f"auc={100 * final['auc']:.2f} accuracy={100 * final['accuracy']:.2f}"
    )
    return 0


def cmd_experiment(args) -> int:
    flat = apply_overrides(load_flat_config(args.config) if args.config else {}, args.set)
    spec = synthetic_spec_from(flat, args.seed)
    config = loop_config_from(flat, args.seed)
    driver = {
        "q1": run_experiment_q1,
        "q2": run_experiment_q2,
        "q3": run_experiment_q3,
        "q4": run_experiment_q4,
    }[args.which]
    if args.which == "q2" and "embedding_table_file" in flat:
        report = driver(spec, config, load_embedding_table(flat["embedding_table_file"]))
    else:
        report = driver(spec, config)
    csv_path, txt_path = report.write(args.out)
    print(report.summary())
    print(f"report written to {csv_path} and {txt_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .task_service import create_app

    flat = apply_overrides(load_flat_config(args.config) if args.config else {}, args.set)
    app = create_app(
        args.state_dir, flat, seed=args.seed, frontend_dir=flat.get("frontend_dir")
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_evaluate(args) -> int:
    model, vocab_hash = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus)
    vocab = build_vocabulary(corpus, min_frequency=args.min_frequency)
    if vocab_hash and vocab.content_hash() != vocab_hash:
        print(
            "warning: vocabulary hash differs from the checkpoint's", file=sys.stderr
        )
    vcorpus = VectorizedCorpus(corpus, vocab)
    scores = predict(model, vcorpus.X_test)
    metrics = {
        "auc": round(100.0 * auc_pr(scores, vcorpus.test_labels), 2),
        "accuracy": round(100.0 * accuracy(scores, vcorpus.test_labels), 2),
        "n_test": int(vcorpus.test_labels.size),
    }
    print(json.dumps(metrics, sort_keys=True))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keywordloop",
        description="Human-AI loop training for keyword-based event detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int, required=True)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE", help="config override"
        )

    common(sub.add_parser("gen-data", help="generate a synthetic corpus"))
    common(sub.add_parser("train", help="train the single-keyword baseline"))
    common(sub.add_parser("run-loop", help="run the full loop with simulated annotators"))
    p_exp = sub.add_parser("experiment", help="run an experiment driver")
    p_exp.add_argument("--which", choices=["q1", "q2", "q3", "q4"], required=True)
    common(p_exp)

    p_serve = sub.add_parser("serve", help="serve annotation tasks over HTTP")
    p_serve.add_argument("--config", help="flat JSON config file")
    p_serve.add_argument("--seed", type=int, required=True)
    p_serve.add_argument("--state-dir", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8321)
    p_serve.add_argument("--set", action="append", metavar="KEY=VALUE")

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on a test file")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--min-frequency", type=int, default=2)
    p_eval.add_argument("--out")
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "run-loop": cmd_run_loop,
        "experiment": cmd_experiment,
        "serve": cmd_serve,
        "evaluate": cmd_evaluate,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # surfaced as diagnostics, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
