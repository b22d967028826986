"""Majority voting with deterministic tie-breaking and per-cluster label aggregation."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .clustering import ClusterAssignment
from .dataset import AnnotationMatrix, LabelScheme
from .errors import ConfigError, ConsistencyError, InvalidInputError

PRIORITY_LABEL = "priority_label"
GLOBAL_MAJORITY = "global_majority"
LEXICOGRAPHIC = "lexicographic"
RULES = (PRIORITY_LABEL, GLOBAL_MAJORITY, LEXICOGRAPHIC)
HALF_VOTE = "half_vote"  # multilabel: a label chosen by exactly half the voters is kept


@dataclass(frozen=True)
class TieBreakPolicy:
    chain: tuple[str, ...] = (PRIORITY_LABEL, GLOBAL_MAJORITY, LEXICOGRAPHIC)
    priority: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "chain", tuple(self.chain))
        object.__setattr__(self, "priority", tuple(self.priority or ()))
        if not self.chain:
            raise ConfigError("tie-break chain must not be empty")
        bad = [r for r in self.chain if r not in RULES]
        if bad:
            raise ConfigError(f"unknown tie-break rules {bad}; expected {RULES}")
        if self.chain[-1] != LEXICOGRAPHIC:
            raise ConfigError("tie-break chain must end with 'lexicographic' so every tie resolves")

    @classmethod
    def for_scheme(cls, scheme: LabelScheme, chain: Sequence[str] | None = None) -> "TieBreakPolicy":
        """Default chain, with the scheme's tie priority (e.g. hate first) as the priority list."""
        if chain is None:
            return cls(priority=scheme.tie_priority)
        return cls(chain=tuple(chain), priority=scheme.tie_priority)

    def to_dict(self) -> dict:
        return {"chain": list(self.chain), "priority": list(self.priority)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TieBreakPolicy":
        return cls(chain=tuple(data.get("chain", cls.chain)), priority=tuple(data.get("priority", ())))


@dataclass(frozen=True)
class TieEvent:
    """One invocation of the tie-break policy."""

    candidates: tuple[str, ...]
    resolved: tuple[str, ...]
    rule: str
    stage: str = ""
    instance_id: str = ""
    cluster: int | None = None  # None for the gold label / final vote

    def located(self, stage: str, instance_id: str, cluster: int | None) -> "TieEvent":
        return TieEvent(self.candidates, self.resolved, self.rule, stage, instance_id, cluster)


def _break_tie(tied: list[str], policy: TieBreakPolicy, global_counts: Mapping[str, int] | None):
    for rule in policy.chain:
        if rule == PRIORITY_LABEL:
            ranked = [lab for lab in policy.priority if lab in tied]
            if ranked:
                return ranked[0], rule
        elif rule == GLOBAL_MAJORITY:
            if global_counts:
                best = max(global_counts.get(lab, 0) for lab in tied)
                top = [lab for lab in tied if global_counts.get(lab, 0) == best]
                if len(top) == 1:
                    return top[0], rule
                tied = top
        else:
            return min(tied), rule
    raise AssertionError("unreachable: chain ends with lexicographic")


def vote(
    label_sets: Sequence,
    scheme: LabelScheme,
    policy: TieBreakPolicy,
    global_counts: Mapping[str, int] | None = None,
) -> tuple[frozenset, TieEvent | None]:
    """Majority vote returning the winning label set and the tie event, if a tie occurred.

    Multiclass: most frequent label, ties through the policy chain.
    Multilabel: a label is kept when more than half the voters chose it; labels
    chosen by exactly half are kept too (all tied labels are assigned).
    """
    if not label_sets:
        raise InvalidInputError("cannot vote over an empty list")
    if scheme.multilabel:
        counts = Counter(lab for s in label_sets for lab in s)
        n = len(label_sets)
        keep = frozenset(lab for lab, c in counts.items() if 2 * c >= n)
        half = tuple(sorted(lab for lab, c in counts.items() if 2 * c == n))
        tie = TieEvent(half, tuple(sorted(keep)), HALF_VOTE) if half else None
        return keep, tie
    counts = Counter()
    for s in label_sets:
        if len(s) != 1:
            raise InvalidInputError(f"multiclass vote expects singleton label sets, got {sorted(s)}")
        counts[next(iter(s))] += 1
    best = max(counts.values())
    tied = sorted(lab for lab, c in counts.items() if c == best)
    if len(tied) == 1:
        return frozenset(tied), None
    winner, rule = _break_tie(tied, policy, global_counts)
    return frozenset([winner]), TieEvent(tuple(tied), (winner,), rule)


def majority_vote(
    label_sets: Sequence,
    scheme: LabelScheme,
    policy: TieBreakPolicy,
    global_counts: Mapping[str, int] | None = None,
) -> frozenset:
    return vote(label_sets, scheme, policy, global_counts)[0]


def gold_labels(
    matrix: AnnotationMatrix, policy: TieBreakPolicy, ties: list | None = None
) -> list[frozenset]:
    """Majority vote over all annotators of each instance."""
    counts = matrix.label_counts()
    gold = []
    for j, inst in enumerate(matrix.instances):
        labels, tie = vote([s for _, s in matrix.instance_annotations(j)], matrix.scheme, policy, counts)
        if tie is not None and ties is not None:
            ties.append(tie.located("gold", inst, None))
        gold.append(labels)
    return gold


@dataclass(frozen=True)
class ClusteredDataset:
    instances: tuple[str, ...]
    n_clusters: int
    cluster_labels: tuple  # per instance, a tuple of C entries: frozenset or None (missing)
    gold: tuple
    coverage: tuple  # per cluster, fraction of instances with a label
    ties: tuple = field(default=(), compare=False)

    def column(self, c: int) -> list:
        return [row[c] for row in self.cluster_labels]

    def to_jsonl(self) -> str:
        lines = []
        for inst, row, g in zip(self.instances, self.cluster_labels, self.gold):
            rec = {"instance_id": inst, "gold": sorted(g)}
            for c, labels in enumerate(row):
                rec[f"cluster_{c}"] = None if labels is None else sorted(labels)
            lines.append(json.dumps(rec, ensure_ascii=False))
        return "\n".join(lines) + "\n"

    def ties_csv(self) -> str:
        return ties_csv(self.ties)


def ties_csv(ties: Sequence[TieEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stage", "instance_id", "cluster", "candidates", "resolved", "rule"])
    for t in ties:
        writer.writerow([
            t.stage, t.instance_id, "" if t.cluster is None else t.cluster,
            "|".join(t.candidates), "|".join(t.resolved), t.rule,
        ])
    return buf.getvalue()


def aggregate_clusters(
    matrix: AnnotationMatrix,
    assignment: ClusterAssignment,
    policy: TieBreakPolicy,
    impute_missing: bool = False,
) -> ClusteredDataset:
    """Per-instance, per-cluster majority labels plus the global majority gold label."""
    missing = [a for a in matrix.annotators if a not in assignment.membership]
    if missing:
        raise ConsistencyError(f"annotators absent from cluster assignment: {missing}")
    cluster_of = [assignment.membership[a] for a in matrix.annotators]
    n_clusters = assignment.n_clusters
    counts = matrix.label_counts()
    ties: list[TieEvent] = []
    gold = gold_labels(matrix, policy, ties)
    rows = []
    covered = [0] * n_clusters
    for j, inst in enumerate(matrix.instances):
        groups: list[list] = [[] for _ in range(n_clusters)]
        for i, labels in matrix.instance_annotations(j):
            groups[cluster_of[i]].append(labels)
        row = []
        for c, group in enumerate(groups):
            if not group:
                row.append(gold[j] if impute_missing else None)
                continue
            labels, tie = vote(group, matrix.scheme, policy, counts)
            if tie is not None:
                ties.append(tie.located("cluster", inst, c))
            covered[c] += 1
            row.append(labels)
        rows.append(tuple(row))
    m = matrix.n_instances
    return ClusteredDataset(
        instances=matrix.instances,
        n_clusters=n_clusters,
        cluster_labels=tuple(rows),
        gold=tuple(gold),
        coverage=tuple(k / m for k in covered),
        ties=tuple(ties),
    )
