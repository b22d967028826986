"""Synthetic annotator populations with planted perspective groups.

Each instance has a true label and text drawn from class-specific vocabularies.
Annotators belong to perspectives; an annotator labels an instance by sampling
from its perspective's confusion row for the true label (multiclass) or by
flipping each label's presence with a per-perspective probability (multilabel).
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import MULTICLASS, MULTILABEL, AnnotationMatrix, AnnotationRecord, LabelScheme, write_dataset
from .errors import SpecError

UNIFORM = "uniform"
SKEWED = "skewed"
NO_LABEL_VOCAB = "<none>"


def cyclic_views(n_labels: int, n_perspectives: int) -> list[list[int]]:
    """Perspective k perceives true class y as class (y + k) mod L."""
    return [[(y + k) % n_labels for y in range(n_labels)] for k in range(n_perspectives)]


def perspective_confusion(view: Sequence[int], diagonal: float) -> np.ndarray:
    """Row-stochastic matrix putting ``diagonal`` on each row's perceived class, the rest spread evenly."""
    n = len(view)
    if n == 1:
        return np.ones((1, 1))
    m = np.full((n, n), (1.0 - diagonal) / (n - 1))
    for y, v in enumerate(view):
        m[y, v] = diagonal
    return m


@dataclass
class PerspectiveSpec:
    labels: tuple[str, ...]
    annotators_per_perspective: tuple[int, ...]
    confusion: list = field(default_factory=list)  # K matrices (L x L) or K flip vectors (L,)
    task_kind: str = MULTICLASS
    workload: str = UNIFORM
    skew_alpha: float = 2.0
    annotations_per_instance: int = 3
    n_instances: int = 500
    class_prior: tuple[float, ...] | None = None  # multiclass: class probabilities; multilabel: presence rates
    vocabulary_per_class: dict | None = None
    vocab_size: int = 30
    shared_vocab_size: int = 60
    overlap: float = 0.3  # chance that a token comes from the shared pool
    tokens_per_text: int = 12
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    tie_priority: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.annotators_per_perspective = tuple(int(n) for n in self.annotators_per_perspective)
        self.confusion = [np.asarray(c, dtype=float) for c in self.confusion]
        self.validate()

    @property
    def n_perspectives(self) -> int:
        return len(self.annotators_per_perspective)

    @property
    def n_annotators(self) -> int:
        return sum(self.annotators_per_perspective)

    @property
    def scheme(self) -> LabelScheme:
        return LabelScheme(self.task_kind, self.labels, self.tie_priority)

    def validate(self) -> None:
        n_labels = len(self.labels)
        if self.n_perspectives < 1:
            raise SpecError("need at least one perspective")
        if any(n < 1 for n in self.annotators_per_perspective):
            raise SpecError("every perspective needs at least one annotator")
        if len(self.confusion) != self.n_perspectives:
            raise SpecError(f"{len(self.confusion)} confusion entries for {self.n_perspectives} perspectives")
        if self.task_kind not in (MULTICLASS, MULTILABEL):
            raise SpecError(f"unknown task kind {self.task_kind!r}")
        for c in self.confusion:
            if self.task_kind == MULTICLASS:
                if c.shape != (n_labels, n_labels):
                    raise SpecError(f"confusion must be {n_labels}x{n_labels}, got {c.shape}")
                if np.any(c < 0) or np.any(np.abs(c.sum(axis=1) - 1.0) > 1e-9):
                    raise SpecError("confusion rows must be non-negative and sum to 1")
            elif c.shape != (n_labels,) or np.any((c < 0) | (c > 1)):
                raise SpecError("multilabel flip probabilities must be one value in [0, 1] per label")
        if not 1 <= self.annotations_per_instance <= self.n_annotators:
            raise SpecError(
                f"annotations_per_instance={self.annotations_per_instance} must be in "
                f"[1, {self.n_annotators}] (total annotators)"
            )
        if self.workload not in (UNIFORM, SKEWED):
            raise SpecError(f"workload must be 'uniform' or 'skewed', got {self.workload!r}")
        if self.n_instances < 1:
            raise SpecError("n_instances must be positive")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise SpecError("split_fractions must be three numbers summing to 1")
        if not 0 <= self.overlap <= 1:
            raise SpecError("overlap must be in [0, 1]")
        if self.class_prior is not None and len(self.class_prior) != n_labels:
            raise SpecError("class_prior needs one entry per label")
        if self.vocabulary_per_class:
            missing = [lab for lab in self.labels if not self.vocabulary_per_class.get(lab)]
            if missing:
                raise SpecError(f"vocabulary_per_class has no words for {missing}")

    @classmethod
    def planted(
        cls,
        labels: Sequence[str],
        annotators_per_perspective: Sequence[int],
        diagonal: float = 0.9,
        views: Sequence[Sequence[int]] | None = None,
        **kwargs,
    ) -> "PerspectiveSpec":
        """Multiclass spec where perspective k follows ``views[k]`` (cyclic shifts by default) w.p. ``diagonal``."""
        k = len(annotators_per_perspective)
        views = views if views is not None else cyclic_views(len(labels), k)
        confusion = [perspective_confusion(v, diagonal) for v in views]
        return cls(tuple(labels), tuple(annotators_per_perspective), confusion, **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "PerspectiveSpec":
        data = dict(data)
        try:
            if "confusion" not in data and data.get("task_kind", MULTICLASS) == MULTICLASS:
                views = data.pop("views", None)
                diagonal = data.pop("diagonal", 0.9)
                return cls.planted(data.pop("labels"), data.pop("annotators_per_perspective"),
                                   diagonal, views, **_tupled(data))
            return cls(**_tupled(data))
        except TypeError as exc:
            raise SpecError(f"bad simulation spec: {exc}") from None
        except KeyError as exc:
            raise SpecError(f"simulation spec is missing {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "annotators_per_perspective": list(self.annotators_per_perspective),
            "confusion": [c.tolist() for c in self.confusion],
            "task_kind": self.task_kind,
            "workload": self.workload,
            "skew_alpha": self.skew_alpha,
            "annotations_per_instance": self.annotations_per_instance,
            "n_instances": self.n_instances,
            "class_prior": None if self.class_prior is None else list(self.class_prior),
            "vocabulary_per_class": self.vocabulary_per_class,
            "vocab_size": self.vocab_size,
            "shared_vocab_size": self.shared_vocab_size,
            "overlap": self.overlap,
            "tokens_per_text": self.tokens_per_text,
            "split_fractions": list(self.split_fractions),
            "tie_priority": list(self.tie_priority),
            "seed": self.seed,
        }


def _tupled(data: dict) -> dict:
    for key in ("split_fractions", "class_prior", "tie_priority", "annotators_per_perspective"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    return data


@dataclass
class SyntheticDataset:
    matrix: AnnotationMatrix
    planted: dict  # annotator id -> perspective index
    true_labels: dict  # instance id -> frozenset

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_dataset(self.matrix, out / "dataset.jsonl")
        truth = {
            "planted": self.planted,
            "true_labels": {k: sorted(v) for k, v in self.true_labels.items()},
        }
        (out / "planted.json").write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")


def _words(rng: np.random.Generator, count: int, taken: set) -> list[str]:
    letters = np.array(list(string.ascii_lowercase))
    out = []
    while len(out) < count:
        w = "".join(rng.choice(letters, size=int(rng.integers(4, 9))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def workload_weights(n_annotators: int, workload: str, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Per-annotator sampling weights; skewed workloads follow a rank power law with exponent ``alpha``."""
    if workload == UNIFORM:
        return np.full(n_annotators, 1.0 / n_annotators)
    ranks = rng.permutation(n_annotators) + 1
    w = ranks.astype(float) ** (-alpha)
    return w / w.sum()


def generate(spec: PerspectiveSpec) -> SyntheticDataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    labels = spec.labels
    n_labels = len(labels)
    multilabel = spec.task_kind == MULTILABEL

    taken: set = set()
    if spec.vocabulary_per_class:
        vocab = {k: list(v) for k, v in spec.vocabulary_per_class.items()}
    else:
        keys = list(labels) + ([NO_LABEL_VOCAB] if multilabel else [])
        vocab = {k: _words(rng, spec.vocab_size, taken) for k in keys}
    shared = _words(rng, spec.shared_vocab_size, taken) if spec.shared_vocab_size else []
    if multilabel and not vocab.get(NO_LABEL_VOCAB):
        # texts with no true label draw from the shared pool when no dedicated words were given
        vocab[NO_LABEL_VOCAB] = shared or _words(rng, spec.vocab_size, taken)

    annotators = [f"a{i:03d}" for i in range(spec.n_annotators)]
    perspective = np.repeat(np.arange(spec.n_perspectives), spec.annotators_per_perspective)
    weights = workload_weights(spec.n_annotators, spec.workload, spec.skew_alpha, rng)

    m = spec.n_instances
    order = rng.permutation(m)
    n_train = int(round(spec.split_fractions[0] * m))
    n_dev = int(round(spec.split_fractions[1] * m))
    split_of = np.empty(m, dtype=object)
    split_of[order[:n_train]] = "train"
    split_of[order[n_train:n_train + n_dev]] = "dev"
    split_of[order[n_train + n_dev:]] = "test"

    if multilabel:
        rates = np.asarray(spec.class_prior if spec.class_prior is not None else [0.3] * n_labels)
    else:
        prior = np.asarray(spec.class_prior if spec.class_prior is not None else [1.0 / n_labels] * n_labels)
        prior = prior / prior.sum()

    records = []
    true_labels = {}
    for j in range(m):
        inst = f"x{j:05d}"
        if multilabel:
            present = rng.random(n_labels) < rates
            truth = frozenset(labels[k] for k in np.flatnonzero(present))
            pools = [vocab[lab] for lab in sorted(truth)] or [vocab[NO_LABEL_VOCAB]]
        else:
            y = int(rng.choice(n_labels, p=prior))
            truth = frozenset([labels[y]])
            pools = [vocab[labels[y]]]
        tokens = []
        for _ in range(spec.tokens_per_text):
            if shared and rng.random() < spec.overlap:
                tokens.append(shared[int(rng.integers(len(shared)))])
            else:
                pool = pools[int(rng.integers(len(pools)))]
                tokens.append(pool[int(rng.integers(len(pool)))])
        text = " ".join(tokens)
        true_labels[inst] = truth

        chosen = np.sort(rng.choice(spec.n_annotators, size=spec.annotations_per_instance, replace=False, p=weights))
        for i in chosen:
            conf = spec.confusion[perspective[i]]
            if multilabel:
                flip = rng.random(n_labels) < conf
                given = present ^ flip
                lab_set = frozenset(labels[k] for k in np.flatnonzero(given))
            else:
                lab_set = frozenset([labels[int(rng.choice(n_labels, p=conf[y]))]])
            records.append(AnnotationRecord(inst, annotators[i], lab_set, str(split_of[j]), text))

    records.sort(key=lambda r: (r.instance_id, r.annotator_id))
    matrix = AnnotationMatrix.from_records(records, spec.scheme)
    planted = {a: int(perspective[i]) for i, a in enumerate(annotators) if a in set(matrix.annotators)}
    return SyntheticDataset(matrix, planted, true_labels)
