"""Metrics, prediction voting, and repeated end-to-end experiments."""

from __future__ import annotations

import json
import logging
import warnings
from fractions import Fraction
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .agreement import similarity_matrix, to_distance
from .aggregation import ClusteredDataset, TieBreakPolicy, TieEvent, aggregate_clusters, gold_labels, vote
from .clustering import KMEANS, ClusterAssignment, cluster_annotators, cluster_count, identity_assignment
from .dataset import AnnotationMatrix, LabelScheme
from .errors import ConfigError, InvalidInputError, ShapeError, StageError
from .features import FeatureExtractor
from .models import TrainConfig, predict, train_ensemble, train_multilabel_head, train_multitask, train_single

log = logging.getLogger(__name__)

MAJORITY = "majority"
ENSEMBLE = "ensemble"
MULTILABEL_HEAD = "multilabel"
MULTITASK = "multitask"
APPROACHES = (MAJORITY, ENSEMBLE, MULTILABEL_HEAD, MULTITASK)
INDIVIDUAL = "individual"
CLUSTERED = "clustered"
GRANULARITIES = (INDIVIDUAL, CLUSTERED)


class AbsentClassWarning(UserWarning):
    pass


def _f1(tp: int, fp: int, fn: int) -> Fraction:
    denom = 2 * tp + fp + fn
    return Fraction(2 * tp, denom) if denom else Fraction(0)


def macro_f1(gold: Sequence, predicted: Sequence, scheme: LabelScheme) -> tuple[float, dict, float]:
    """(macro-F1, per-class F1, accuracy), all as fractions.

    Per-class F1 is one-vs-rest on label presence, which for multiclass is the
    usual confusion-matrix F1. Classes absent from both gold and predictions
    score 0 and trigger a warning.
    """
    if len(gold) != len(predicted):
        raise InvalidInputError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    if not gold:
        raise InvalidInputError("cannot score an empty prediction list")
    per_class = {}
    absent = []
    for lab in scheme.labels:
        tp = fp = fn = 0
        for g, p in zip(gold, predicted):
            in_g, in_p = lab in g, lab in p
            tp += in_g and in_p
            fp += in_p and not in_g
            fn += in_g and not in_p
        if tp + fp + fn == 0:
            absent.append(lab)
        per_class[lab] = _f1(tp, fp, fn)
    if absent:
        warnings.warn(f"classes never seen in gold or predictions score F1=0: {absent}", AbsentClassWarning,
                      stacklevel=2)
    accuracy = sum(1 for g, p in zip(gold, predicted) if frozenset(g) == frozenset(p)) / len(gold)
    # exact rational average, so hand-computed values reproduce to the last bit
    macro = float(sum(per_class.values()) / len(per_class))
    return macro, {lab: float(f) for lab, f in per_class.items()}, accuracy


def vote_predictions(
    per_cluster_preds: Sequence[Sequence],
    scheme: LabelScheme,
    policy: TieBreakPolicy,
    n_clusters: int | None = None,
    global_counts: Mapping[str, int] | None = None,
    instance_ids: Sequence[str] | None = None,
    ties: list | None = None,
) -> list[frozenset]:
    """Majority vote across each instance's C predicted label sets."""
    out = []
    for j, row in enumerate(per_cluster_preds):
        if not row or (n_clusters is not None and len(row) != n_clusters):
            raise ShapeError(f"instance {j} has {len(row)} predictions, expected {n_clusters or '>= 1'}")
        labels, tie = vote(row, scheme, policy, global_counts)
        if tie is not None and ties is not None:
            ties.append(tie.located("prediction", instance_ids[j] if instance_ids else str(j), None))
        out.append(labels)
    return out


@dataclass(frozen=True)
class ExperimentPlan:
    approach: str = MAJORITY
    granularity: str = CLUSTERED
    n_clusters: int | None = None
    method: str = KMEANS
    restarts: int = 10
    min_overlap: int = 2
    impute: str = "zero"
    policy: TieBreakPolicy | None = None
    train: TrainConfig = TrainConfig()
    features: FeatureExtractor = FeatureExtractor()

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ConfigError(f"approach must be one of {APPROACHES}, got {self.approach!r}")
        if self.granularity not in GRANULARITIES:
            raise ConfigError(f"granularity must be one of {GRANULARITIES}, got {self.granularity!r}")

    @property
    def name(self) -> str:
        return MAJORITY if self.approach == MAJORITY else f"{self.granularity}-{self.approach}"


@dataclass
class EvalReport:
    approach: str
    granularity: str
    macro_f1: float  # percent
    accuracy: float  # percent
    per_class_f1: dict  # percent
    repeats: int
    std_dev: float  # percent, sample standard deviation of macro-F1 across repeats
    seeds: list
    n_clusters: int | None = None
    runs: list = field(default_factory=list)  # per-repeat macro-F1 / accuracy
    n_test: int = 0

    def to_json(self) -> dict:
        return {
            "approach": self.approach,
            "granularity": self.granularity,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "per_class_f1": self.per_class_f1,
            "repeats": self.repeats,
            "std_dev": self.std_dev,
            "seeds": self.seeds,
            "n_clusters": self.n_clusters,
            "n_test": self.n_test,
            "runs": self.runs,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


@dataclass
class RunArtifacts:
    """Everything produced by one repeat, for callers that persist intermediate results."""

    assignment: ClusterAssignment | None
    clustered: ClusteredDataset | None
    model: object
    predictions: list
    ties: list


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except ValueError as exc:
        raise StageError(name, exc) from exc


def _texts(matrix: AnnotationMatrix, idx: Sequence[int]) -> list[str]:
    texts = [matrix.text_of(j) for j in idx]
    if any(t is None for t in texts):
        raise InvalidInputError("every train/test instance needs a text to train classifiers")
    return texts


def cluster_train_split(matrix: AnnotationMatrix, plan: ExperimentPlan, seed: int) -> ClusterAssignment:
    """Cluster annotators from their agreement on the training split (or identity for per-annotator runs)."""
    if plan.granularity == INDIVIDUAL:
        return identity_assignment(matrix.annotators, seed)
    train = matrix.restrict("train")
    if len(train.annotators) < matrix.n_annotators:
        raise InvalidInputError(
            f"annotators without training annotations: {sorted(set(matrix.annotators) - set(train.annotators))}"
        )
    n_clusters = cluster_count(matrix, plan.n_clusters)
    if n_clusters == matrix.n_annotators:
        return identity_assignment(matrix.annotators, seed)
    sim, _ = similarity_matrix(train, plan.min_overlap, plan.impute)
    found = cluster_annotators(to_distance(sim), n_clusters, seed=seed, restarts=plan.restarts, method=plan.method)
    # renumber clusters by first appearance in the full matrix's annotator order
    mapping: dict[int, int] = {}
    membership = {a: mapping.setdefault(found.membership[a], len(mapping)) for a in matrix.annotators}
    return ClusterAssignment(n_clusters, membership, found.method, seed, found.inertia)


def run_once(matrix: AnnotationMatrix, plan: ExperimentPlan, seed: int) -> tuple[dict, RunArtifacts]:
    scheme = matrix.scheme
    policy = plan.policy or TieBreakPolicy.for_scheme(scheme)
    train_idx = [j for j in range(matrix.n_instances) if matrix.split_of(j) == "train"]
    test_idx = [j for j in range(matrix.n_instances) if matrix.split_of(j) == "test"]
    if not train_idx or not test_idx:
        raise StageError("load", InvalidInputError("dataset needs both train and test instances"))
    config = TrainConfig(**{**plan.train.to_dict(), "seed": seed})
    counts = matrix.label_counts()
    ties: list[TieEvent] = []

    assignment = clustered = None
    if plan.approach == MAJORITY:
        with _stage("aggregation"):
            gold = gold_labels(matrix, policy, ties)
        with _stage("training"):
            train_texts = _texts(matrix, train_idx)
            model = train_single([(train_texts[k], gold[j]) for k, j in enumerate(train_idx)],
                                 scheme, config, plan.features)
    else:
        with _stage("clustering"):
            assignment = cluster_train_split(matrix, plan, seed)
        with _stage("aggregation"):
            clustered = aggregate_clusters(matrix, assignment, policy)
            ties.extend(clustered.ties)
            gold = list(clustered.gold)
        with _stage("training"):
            train_texts = _texts(matrix, train_idx)
            sub = ClusteredDataset(
                instances=tuple(matrix.instances[j] for j in train_idx),
                n_clusters=clustered.n_clusters,
                cluster_labels=tuple(clustered.cluster_labels[j] for j in train_idx),
                gold=tuple(clustered.gold[j] for j in train_idx),
                coverage=clustered.coverage,
            )
            trainer = {ENSEMBLE: train_ensemble, MULTILABEL_HEAD: train_multilabel_head,
                       MULTITASK: train_multitask}[plan.approach]
            model = trainer(sub, train_texts, scheme, config, plan.features)

    with _stage("evaluation"):
        test_texts = _texts(matrix, test_idx)
        grid = predict(model, test_texts, scheme, None if assignment is None else assignment.n_clusters)
        test_ids = [matrix.instances[j] for j in test_idx]
        final = vote_predictions(grid, scheme, policy, global_counts=counts, instance_ids=test_ids, ties=ties)
        test_gold = [gold[j] for j in test_idx]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AbsentClassWarning)
            macro, per_class, acc = macro_f1(test_gold, final, scheme)
    result = {"seed": seed, "macro_f1": 100.0 * macro, "accuracy": 100.0 * acc,
              "per_class_f1": {k: 100.0 * v for k, v in per_class.items()}}
    return result, RunArtifacts(assignment, clustered, model, final, ties)


def run_experiment(matrix: AnnotationMatrix, plan: ExperimentPlan, keep_first: bool = False):
    """Run the full pipeline ``plan.train.repeats`` times with seeds seed, seed+1, ... and average.

    Returns the report, plus the first repeat's artifacts when ``keep_first`` is set.
    """
    runs = []
    first = None
    base = plan.train.seed
    for r in range(plan.train.repeats):
        result, artifacts = run_once(matrix, plan, base + r)
        log.info("%s repeat %d: macro-F1 %.2f", plan.name, r, result["macro_f1"])
        runs.append(result)
        if r == 0:
            first = artifacts
    macros = np.array([r["macro_f1"] for r in runs])
    n_clusters = None
    if first.assignment is not None:
        n_clusters = first.assignment.n_clusters
    report = EvalReport(
        approach=plan.approach,
        granularity=plan.granularity,
        macro_f1=float(macros.mean()),
        accuracy=float(np.mean([r["accuracy"] for r in runs])),
        per_class_f1={lab: float(np.mean([r["per_class_f1"][lab] for r in runs])) for lab in matrix.scheme.labels},
        repeats=len(runs),
        std_dev=float(macros.std(ddof=1)) if len(runs) > 1 else 0.0,
        seeds=[r["seed"] for r in runs],
        n_clusters=n_clusters,
        runs=[{"seed": r["seed"], "macro_f1": r["macro_f1"], "accuracy": r["accuracy"]} for r in runs],
        n_test=sum(1 for j in range(matrix.n_instances) if matrix.split_of(j) == "test"),
    )
    return (report, first) if keep_first else report


COMPARISON_COLUMNS = (
    (MAJORITY, None, "Majority"),
    (ENSEMBLE, INDIVIDUAL, "Ensemble"),
    (MULTILABEL_HEAD, INDIVIDUAL, "Multi-label"),
    (MULTITASK, INDIVIDUAL, "Multitask"),
    (ENSEMBLE, CLUSTERED, "Ensemble"),
    (MULTILABEL_HEAD, CLUSTERED, "Multi-label"),
    (MULTITASK, CLUSTERED, "Multitask"),
)


def comparison_table(reports: Mapping[str, EvalReport], dataset_name: str = "dataset") -> str:
    """Markdown table: baseline | individual ensemble/multi-label/multitask | clustered ensemble/multi-label/multitask."""
    header = ["Dataset", "Baseline: Majority",
              *[f"{g.capitalize()}: {label}" for _, g, label in COMPARISON_COLUMNS[1:]]]
    cells = [dataset_name]
    for approach, granularity, _ in COMPARISON_COLUMNS:
        key = MAJORITY if granularity is None else f"{granularity}-{approach}"
        rep = reports.get(key)
        cells.append("n/a" if rep is None else f"{rep.macro_f1:.1f} ± {rep.std_dev:.1f}")
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header), "| " + " | ".join(cells) + " |"]
    return "\n".join(lines) + "\n"
