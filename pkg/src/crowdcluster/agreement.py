"""Pairwise annotator agreement and the similarity / distance matrices built from it."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .dataset import AnnotationMatrix
from .errors import ConfigError, InvalidInputError

IMPUTE_ZERO = "zero"
IMPUTE_MEAN = "mean"


def cohen_kappa(labels_a: Sequence, labels_b: Sequence) -> float:
    """Cohen's kappa between two aligned label sequences.

    Returns 1.0 whenever observed agreement is perfect, including the
    degenerate case where both raters use a single label throughout.
    """
    if len(labels_a) != len(labels_b):
        raise InvalidInputError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n < 2:
        raise InvalidInputError(f"kappa needs at least 2 items, got {n}")
    agree = sum(1 for x, y in zip(labels_a, labels_b) if x == y)
    if agree == n:
        return 1.0
    p_o = agree / n
    count_a, count_b = Counter(labels_a), Counter(labels_b)
    p_e = sum(count_a[c] * count_b[c] for c in count_a) / (n * n)
    if p_e >= 1.0:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def jaccard_agreement(sets_a: Sequence, sets_b: Sequence) -> float:
    """Mean per-item Jaccard similarity; two empty sets count as full agreement."""
    if len(sets_a) != len(sets_b):
        raise InvalidInputError(f"length mismatch: {len(sets_a)} vs {len(sets_b)}")
    if not sets_a:
        raise InvalidInputError("jaccard needs at least 1 item")
    total = 0.0
    for a, b in zip(sets_a, sets_b):
        a, b = set(a), set(b)
        union = a | b
        total += 1.0 if not union else len(a & b) / len(union)
    return total / len(sets_a)


def multilabel_kappa(sets_a: Sequence, sets_b: Sequence, labels: Sequence[str]) -> float:
    """Mean over labels of the binary presence kappa."""
    return float(np.mean([
        cohen_kappa([lab in a for a in sets_a], [lab in b for b in sets_b]) for lab in labels
    ]))


@dataclass(frozen=True)
class PairAgreement:
    annotator_a: str
    annotator_b: str
    overlap: int
    score: float | None  # raw agreement; None when overlap < min_overlap
    imputed: bool = False

    def to_json(self) -> dict:
        return {
            "annotator_a": self.annotator_a,
            "annotator_b": self.annotator_b,
            "overlap": self.overlap,
            "score": self.score,
            "imputed": self.imputed,
        }


@dataclass(frozen=True)
class SimilarityMatrix:
    annotators: tuple[str, ...]
    values: np.ndarray
    overlaps: np.ndarray

    def to_csv(self) -> str:
        return _matrix_csv(self.annotators, self.values)

    def to_json(self) -> dict:
        return {
            "annotators": list(self.annotators),
            "values": self.values.tolist(),
            "overlaps": self.overlaps.tolist(),
        }


@dataclass(frozen=True)
class DistanceMatrix:
    annotators: tuple[str, ...]
    values: np.ndarray

    def to_csv(self) -> str:
        return _matrix_csv(self.annotators, self.values)

    def to_json(self) -> dict:
        return {"annotators": list(self.annotators), "values": self.values.tolist()}


def _matrix_csv(names: Sequence[str], values: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["annotator", *names])
    for name, row in zip(names, values):
        writer.writerow([name, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def read_matrix_csv(text: str) -> tuple[tuple[str, ...], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    names = tuple(rows[0][1:])
    values = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return names, values


def pair_score(matrix: AnnotationMatrix, i: int, k: int, min_overlap: int = 2) -> PairAgreement:
    """Agreement of annotators ``i`` and ``k`` on their co-annotated instances."""
    ann_i = matrix.annotator_annotations(i)
    ann_k = matrix.annotator_annotations(k)
    shared = [j for j in ann_i if j in ann_k]
    name_i, name_k = matrix.annotators[i], matrix.annotators[k]
    if len(shared) < max(min_overlap, 1):
        return PairAgreement(name_i, name_k, len(shared), None, imputed=True)
    a = [ann_i[j] for j in shared]
    b = [ann_k[j] for j in shared]
    if matrix.scheme.multilabel:
        score = jaccard_agreement(a, b)
    elif len(shared) < 2:
        # min_overlap=1 with a single shared item: kappa is undefined, fall back to raw agreement
        score = float(a[0] == b[0])
    else:
        score = cohen_kappa([next(iter(s)) for s in a], [next(iter(s)) for s in b])
    return PairAgreement(name_i, name_k, len(shared), score)


def similarity_matrix(
    matrix: AnnotationMatrix, min_overlap: int = 2, impute: str = IMPUTE_ZERO
) -> tuple[SimilarityMatrix, list[PairAgreement]]:
    """Pairwise agreement for all annotator pairs.

    Scores go into the matrix clamped to [0, 1]; negative kappas become 0.
    Pairs sharing fewer than ``min_overlap`` instances get 0.0, or the mean of
    the defined (clamped) similarities when ``impute="mean"``.
    """
    if impute not in (IMPUTE_ZERO, IMPUTE_MEAN):
        raise ConfigError(f"impute must be 'zero' or 'mean', got {impute!r}")
    if min_overlap < 1:
        raise ConfigError("min_overlap must be at least 1")
    n = matrix.n_annotators
    if n < 2:
        raise InvalidInputError(f"need at least 2 annotators, got {n}")
    values = np.eye(n)
    overlaps = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        overlaps[i, i] = len(matrix.annotator_annotations(i))
    pairs = []
    for i, k in combinations(range(n), 2):
        pair = pair_score(matrix, i, k, min_overlap)
        pairs.append(pair)
        overlaps[i, k] = overlaps[k, i] = pair.overlap
        if pair.score is not None:
            values[i, k] = values[k, i] = min(max(pair.score, 0.0), 1.0)
    fill = 0.0
    if impute == IMPUTE_MEAN:
        defined = [min(max(p.score, 0.0), 1.0) for p in pairs if p.score is not None]
        fill = float(np.mean(defined)) if defined else 0.0
    for (i, k), pair in zip(combinations(range(n), 2), pairs):
        if pair.score is None:
            values[i, k] = values[k, i] = fill
    return SimilarityMatrix(matrix.annotators, values, overlaps), pairs


def to_distance(sim: SimilarityMatrix) -> DistanceMatrix:
    values = 1.0 - np.asarray(sim.values, dtype=float)
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(sim.annotators, values)


def pairs_csv(pairs: Sequence[PairAgreement]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["annotator_a", "annotator_b", "overlap", "score", "imputed"])
    for p in pairs:
        writer.writerow([p.annotator_a, p.annotator_b, p.overlap, "" if p.score is None else repr(p.score), int(p.imputed)])
    return buf.getvalue()


def similarity_json(sim: SimilarityMatrix, pairs: Sequence[PairAgreement]) -> str:
    data = sim.to_json()
    data["pairs"] = [p.to_json() for p in pairs]
    return json.dumps(data, indent=2)
