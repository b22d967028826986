"""Per-dataset summary statistics: split sizes, coverage, label distribution, agreement."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from itertools import combinations

from .agreement import cohen_kappa, multilabel_kappa
from .aggregation import TieBreakPolicy, gold_labels
from .dataset import AnnotationMatrix

NO_LABEL_KEY = "<none>"
KAPPA_METHOD = "overlap-weighted mean of pairwise Cohen's kappa (pairs with overlap < 2 excluded)"


@dataclass(frozen=True)
class DatasetSummary:
    n_train: int
    n_dev: int
    n_test: int
    annotators_per_instance_min: int
    annotators_per_instance_mean: float
    annotators_per_instance_max: int
    total_annotators: int
    label_distribution: dict
    pct_full_agreement: float
    overall_kappa: float | None
    annotation_counts_per_annotator: dict
    overall_kappa_method: str = KAPPA_METHOD

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False)

    def csv_row(self, header: bool = False, name: str = "") -> str:
        """One CSV line (optionally with header) so summaries of many datasets can be concatenated."""
        labels = list(self.label_distribution)
        cols = ["dataset", "n_train", "n_dev", "n_test", "anno_per_inst_min", "anno_per_inst_mean",
                "anno_per_inst_max", "total_annotators", *[f"pct_{lab}" for lab in labels],
                "pct_full_agreement", "overall_kappa"]
        vals = [name, self.n_train, self.n_dev, self.n_test, self.annotators_per_instance_min,
                f"{self.annotators_per_instance_mean:.4f}", self.annotators_per_instance_max,
                self.total_annotators, *[f"{self.label_distribution[lab]:.4f}" for lab in labels],
                f"{self.pct_full_agreement:.4f}",
                "" if self.overall_kappa is None else f"{self.overall_kappa:.6f}"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(cols)
        writer.writerow(vals)
        return buf.getvalue()


def overall_kappa(matrix: AnnotationMatrix, min_overlap: int = 2) -> float | None:
    """Pairwise kappas averaged with co-annotation counts as weights; None if no pair qualifies."""
    total = weight = 0.0
    for i, k in combinations(range(matrix.n_annotators), 2):
        ann_i, ann_k = matrix.annotator_annotations(i), matrix.annotator_annotations(k)
        shared = [j for j in ann_i if j in ann_k]
        if len(shared) < max(min_overlap, 2):
            continue
        a = [ann_i[j] for j in shared]
        b = [ann_k[j] for j in shared]
        if matrix.scheme.multilabel:
            score = multilabel_kappa(a, b, matrix.scheme.labels)
        else:
            score = cohen_kappa([next(iter(s)) for s in a], [next(iter(s)) for s in b])
        total += len(shared) * score
        weight += len(shared)
    return total / weight if weight else None


def summarize(matrix: AnnotationMatrix, policy: TieBreakPolicy | None = None) -> DatasetSummary:
    policy = policy or TieBreakPolicy.for_scheme(matrix.scheme)
    splits = [matrix.split_of(j) for j in range(matrix.n_instances)]
    per_instance = matrix.annotators_per_instance()
    m = matrix.n_instances

    gold = gold_labels(matrix, policy)
    dist = {lab: 0 for lab in matrix.scheme.labels}
    if matrix.scheme.multilabel:
        dist[NO_LABEL_KEY] = 0
    for g in gold:
        if not g and matrix.scheme.multilabel:
            dist[NO_LABEL_KEY] += 1
        for lab in g:
            dist[lab] += 1
    total = sum(dist.values())
    distribution = {lab: 100.0 * c / total for lab, c in dist.items()} if total else dist

    full = sum(1 for j in range(m) if len({s for _, s in matrix.instance_annotations(j)}) == 1)
    counts = [0] * matrix.n_annotators
    for i, _ in matrix.entries:
        counts[i] += 1

    return DatasetSummary(
        n_train=splits.count("train"),
        n_dev=splits.count("dev"),
        n_test=splits.count("test"),
        annotators_per_instance_min=min(per_instance),
        annotators_per_instance_mean=sum(per_instance) / m,
        annotators_per_instance_max=max(per_instance),
        total_annotators=matrix.n_annotators,
        label_distribution=distribution,
        pct_full_agreement=100.0 * full / m,
        overall_kappa=overall_kappa(matrix),
        annotation_counts_per_annotator=dict(zip(matrix.annotators, counts)),
    )
