"""Unified inference: couple crowd-label EM with target-model training.

One fitting run alternates (a) an E-step over the annotation matrix with the
current expectation as class prior, (b) a confusion-matrix M-step, (c) a
fused re-estimate of the keyword expectation from the crowd posterior mean
and the model's mean prediction over the keyword-matched pool, and (d) a few
gradient steps on the weakly supervised objective with the refreshed
expectation in place. Crowd labels influence the model parameters only
through the expectation, so the gradient steps never see the annotation
likelihood directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import VectorizedCorpus, filter_by_keyword
from .crowd_model import (
    AnnotationMatrix,
    ConfusionMatrix,
    PosteriorLabels,
    annotation_log_likelihood,
    e_step,
    m_step_confusions,
    majority_vote,
)
from .target_model import (
    AdamOptimizer,
    KeywordRecord,
    TargetModel,
    TrainingConfig,
    TrainingProblem,
    _gradient_arrays,
    _objective_value,
    model_expectation,
)

FUSE_EPS = 1e-6


@dataclass(frozen=True)
class JointConfig:
    """Controls for the alternating fit.

    ``gradient_steps`` is the number of Adam steps interleaved per round;
    0 keeps the model frozen, which reduces the fit to crowd-only
    inference with a neutral fusion term when the model is uninformative.
    ``smoothing`` follows :func:`crowd_model.m_step_confusions`; the
    default (diagonal, off_diagonal) pseudo-counts encode that workers
    beat chance, which keeps 50-item low-prevalence batches identifiable.
    """

    max_rounds: int = 50
    gradient_steps: int = 25
    likelihood_tol: float = 1e-6
    expectation_tol: float = 1e-4
    smoothing: float | tuple[float, float] = (4.0, 1.0)


@dataclass(frozen=True)
class ExpectationEstimate:
    """Fused keyword expectation with its two ingredients kept for reporting."""

    keyword: str
    value: float
    crowd_mean: float
    model_mean: float

    def __post_init__(self) -> None:
        for name in ("value", "crowd_mean", "model_mean"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class JointFitReport:
    """Per-round diagnostics of one fitting run."""

    rounds: int = 0
    annotation_loglik: list[float] = field(default_factory=list)
    expectation_path: list[float] = field(default_factory=list)
    final_objective: float = float("nan")
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "annotation_loglik": list(self.annotation_loglik),
            "expectation_path": list(self.expectation_path),
            "final_objective": self.final_objective,
            "converged": self.converged,
        }

    def format_text(self) -> str:
        lines = ["round\tannotation_loglik\texpectation"]
        for i, (ll, e) in enumerate(zip(self.annotation_loglik, self.expectation_path), 1):
            lines.append(f"{i}\t{ll:.6f}\t{e:.6f}")
        lines.append(f"final_objective\t{self.final_objective:.6f}")
        lines.append(f"converged\t{self.converged}")
        return "\n".join(lines) + "\n"


def fuse_expectation(crowd_mean: float, model_mean: float) -> float:
    """Normalized product of the crowd and model estimates of the positive rate.

    Both inputs are clamped to [1e-6, 1 - 1e-6]; the two class products are
    renormalized so the result is a proper Bernoulli parameter. A 0.5 input
    on either side leaves the other unchanged.
    """
    for name, v in (("crowd_mean", crowd_mean), ("model_mean", model_mean)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    c = min(max(crowd_mean, FUSE_EPS), 1.0 - FUSE_EPS)
    m = min(max(model_mean, FUSE_EPS), 1.0 - FUSE_EPS)
    pos = c * m
    neg = (1.0 - c) * (1.0 - m)
    return pos / (pos + neg)


def joint_objective(
    model: TargetModel,
    corpus: VectorizedCorpus,
    keywords,
    matrix: AnnotationMatrix | None,
    expectation: float,
    confusions: dict[str, ConfusionMatrix],
    config: TrainingConfig,
    extra_labeled=(),
) -> float:
    """Diagnostic total: weakly supervised objective plus annotation log-likelihood."""
    value = _objective_value(model, TrainingProblem(corpus, keywords, config, extra_labeled))
    if matrix is not None:
        value += annotation_log_likelihood(matrix, expectation, confusions)
    return value


def joint_fit(
    matrix: AnnotationMatrix,
    model: TargetModel,
    corpus: VectorizedCorpus,
    keywords,
    current_keyword: str,
    config: TrainingConfig,
    joint: JointConfig = JointConfig(),
    matched: frozenset[str] | None = None,
) -> tuple[ExpectationEstimate, dict[str, ConfusionMatrix], TargetModel, JointFitReport]:
    """Estimate the current keyword's expectation while refreshing the model.

    ``keywords`` are the earlier keyword records whose expectations stay
    frozen; only the current keyword's expectation is re-estimated. The
    returned model is a copy; the input model is left untouched.
    """
    keywords = list(keywords)
    if matched is None:
        matched = frozenset(filter_by_keyword(corpus, current_keyword))
    if not matched:
        raise ValueError(f"keyword {current_keyword!r} matches no unlabeled micropost")

    model = model.copy()
    report = JointFitReport()

    # the fusion's model ingredient is the incoming model's prediction mean:
    # expectation inference consumes the model trained in the previous
    # iteration, while the gradient steps below improve a fresh copy.
    # Fusing against the actively trained copy instead would let the
    # regularizer chase its own estimate toward 0 or 1.
    model_mean = model_expectation(model, matched, corpus)

    # majority-vote start for the confusions, as in standard truth inference
    hard, _ = majority_vote(matrix)
    q0 = np.zeros((matrix.n_items, 2))
    q0[np.arange(matrix.n_items), hard] = 1.0
    confusions = m_step_confusions(
        matrix, PosteriorLabels(matrix.item_ids, q0), joint.smoothing
    )
    crowd_mean = float(q0[:, 1].mean())
    expectation = fuse_expectation(crowd_mean, model_mean)

    opt: AdamOptimizer | None = None
    problem: TrainingProblem | None = None
    prev_loglik: float | None = None

    for round_no in range(1, joint.max_rounds + 1):
        posteriors = e_step(matrix, expectation, confusions)
        confusions = m_step_confusions(matrix, posteriors, joint.smoothing)
        loglik = annotation_log_likelihood(matrix, expectation, confusions)

        crowd_mean = posteriors.mean_positive()
        new_expectation = fuse_expectation(crowd_mean, model_mean)

        if joint.gradient_steps > 0:
            records = keywords + [
                KeywordRecord(current_keyword, new_expectation, matched)
            ]
            problem = TrainingProblem(corpus, records, config)
            if opt is None:
                opt = AdamOptimizer(model, config)
            for _ in range(joint.gradient_steps):
                opt.step(model, _gradient_arrays(model, problem))
            check = _objective_value(model, problem)
            if not math.isfinite(check):
                raise RuntimeError(
                    f"joint fit diverged in round {round_no}: objective={check}"
                )

        report.annotation_loglik.append(loglik)
        report.expectation_path.append(new_expectation)
        report.rounds = round_no

        expectation_shift = abs(new_expectation - expectation)
        expectation = new_expectation
        if prev_loglik is not None:
            rel = abs(loglik - prev_loglik) / max(1.0, abs(prev_loglik))
            if rel < joint.likelihood_tol and expectation_shift < joint.expectation_tol:
                report.converged = True
                break
        prev_loglik = loglik

    records = keywords + [KeywordRecord(current_keyword, expectation, matched)]
    report.final_objective = _objective_value(
        model, TrainingProblem(corpus, records, config)
    )
    estimate = ExpectationEstimate(
        keyword=current_keyword,
        value=expectation,
        crowd_mean=crowd_mean,
        model_mean=model_mean,
    )
    return estimate, confusions, model, report
