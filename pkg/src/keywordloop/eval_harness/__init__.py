"""Evaluation: ranking metrics, synthetic corpora, and experiment drivers."""

from .metrics import accuracy, auc_pr
from .synthetic import SyntheticSpec, SyntheticWorld, generate_synthetic_corpus

__all__ = [
    "accuracy",
    "auc_pr",
    "SyntheticSpec",
    "SyntheticWorld",
    "generate_synthetic_corpus",
    "ExperimentReport",
    "run_experiment_q1",
    "run_experiment_q2",
    "run_experiment_q3",
    "run_experiment_q4",
]

_EXPERIMENT_NAMES = {
    "ExperimentReport",
    "run_experiment_q1",
    "run_experiment_q2",
    "run_experiment_q3",
    "run_experiment_q4",
}


def __getattr__(name):
    # experiments imports the loop engine, which imports metrics from this
    # package; defer so the package can initialize in either order.
    if name in _EXPERIMENT_NAMES:
        from . import experiments

        return getattr(experiments, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
