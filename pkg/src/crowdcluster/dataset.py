"""Annotator-level datasets: label schemes, records, and the sparse annotation matrix.

Input is JSON lines, one annotation per line::

    {"instance_id": "x1", "annotator_id": "a3", "labels": ["neg"], "split": "train", "text": "..."}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import DuplicateError, InvalidInputError, ParseError, ValidationError

MULTICLASS = "multiclass"
MULTILABEL = "multilabel"
TASK_KINDS = (MULTICLASS, MULTILABEL)
SPLITS = ("train", "dev", "test")

LabelSet = frozenset  # frozenset[str]; the empty set means "no label" in multilabel tasks


@dataclass(frozen=True)
class LabelScheme:
    task_kind: str
    labels: tuple[str, ...]
    tie_priority: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "tie_priority", tuple(self.tie_priority or ()))
        if self.task_kind not in TASK_KINDS:
            raise ValidationError(f"task_kind must be one of {TASK_KINDS}, got {self.task_kind!r}")
        if not self.labels:
            raise ValidationError("label scheme needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError(f"duplicate labels in scheme: {list(self.labels)}")
        unknown = [lab for lab in self.tie_priority if lab not in self.labels]
        if unknown:
            raise ValidationError(f"tie_priority labels not in scheme: {unknown}")

    @property
    def multilabel(self) -> bool:
        return self.task_kind == MULTILABEL

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def to_dict(self) -> dict:
        out = {"task_kind": self.task_kind, "labels": list(self.labels)}
        if self.tie_priority:
            out["tie_priority"] = list(self.tie_priority)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "LabelScheme":
        try:
            return cls(
                task_kind=data["task_kind"],
                labels=tuple(data["labels"]),
                tie_priority=tuple(data.get("tie_priority") or ()),
            )
        except KeyError as exc:
            raise ValidationError(f"label scheme is missing field {exc.args[0]!r}") from None

    def check(self, labels: Iterable[str]) -> LabelSet:
        """Validate one annotation's labels against the scheme and return them as a set."""
        labels = list(labels)
        bad = [lab for lab in labels if lab not in self.labels]
        if bad:
            raise ValidationError(f"labels {bad} not in scheme {list(self.labels)}")
        out = frozenset(labels)
        if len(out) != len(labels):
            raise ValidationError(f"repeated label in {labels}")
        if self.task_kind == MULTICLASS and len(out) != 1:
            raise ValidationError(f"multiclass annotation needs exactly one label, got {labels}")
        return out


@dataclass(frozen=True)
class AnnotationRecord:
    instance_id: str
    annotator_id: str
    labels: LabelSet
    split: str
    text: str | None = None

    def to_json(self) -> dict:
        out = {
            "instance_id": self.instance_id,
            "annotator_id": self.annotator_id,
            "labels": sorted(self.labels),
            "split": self.split,
        }
        if self.text is not None:
            out["text"] = self.text
        return out


def parse_record(payload: Mapping, scheme: LabelScheme) -> AnnotationRecord:
    if not isinstance(payload, Mapping):
        raise ValidationError("record must be a JSON object")
    for key in ("instance_id", "annotator_id", "labels", "split"):
        if key not in payload:
            raise ValidationError(f"record is missing field {key!r}")
    labels = payload["labels"]
    if isinstance(labels, str):
        labels = [labels]
    if not isinstance(labels, list) or not all(isinstance(lab, str) for lab in labels):
        raise ValidationError("'labels' must be a list of strings")
    split = payload["split"]
    if split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}, got {split!r}")
    text = payload.get("text")
    if text is not None and not isinstance(text, str):
        raise ValidationError("'text' must be a string")
    return AnnotationRecord(
        instance_id=str(payload["instance_id"]),
        annotator_id=str(payload["annotator_id"]),
        labels=scheme.check(labels),
        split=split,
        text=text,
    )


@dataclass(frozen=True, eq=True)
class AnnotationMatrix:
    """Sparse annotator x instance label store.

    ``entries`` maps ``(annotator index, instance index)`` to a frozenset of labels.
    Annotators and instances keep first-appearance order from the input.
    """

    annotators: tuple[str, ...]
    instances: tuple[str, ...]
    entries: dict
    scheme: LabelScheme
    splits: dict = field(default_factory=dict)
    texts: dict = field(default_factory=dict)

    def __post_init__(self):
        n, m = len(self.annotators), len(self.instances)
        seen_a, seen_x = [False] * n, [False] * m
        for (i, j), labels in self.entries.items():
            if not (0 <= i < n and 0 <= j < m):
                raise ValidationError(f"entry index ({i}, {j}) out of range")
            self.scheme.check(labels)
            seen_a[i] = seen_x[j] = True
        if not all(seen_a):
            raise ValidationError(f"annotator {self.annotators[seen_a.index(False)]!r} has no annotations")
        if not all(seen_x):
            raise ValidationError(f"instance {self.instances[seen_x.index(False)]!r} has no annotations")

    @classmethod
    def from_records(cls, records: Iterable[AnnotationRecord], scheme: LabelScheme) -> "AnnotationMatrix":
        annotators: dict[str, int] = {}
        instances: dict[str, int] = {}
        entries: dict = {}
        splits: dict = {}
        texts: dict = {}
        for rec in records:
            i = annotators.setdefault(rec.annotator_id, len(annotators))
            j = instances.setdefault(rec.instance_id, len(instances))
            if (i, j) in entries:
                raise DuplicateError(
                    f"duplicate annotation by {rec.annotator_id!r} on {rec.instance_id!r}"
                )
            entries[(i, j)] = rec.labels
            if splits.setdefault(rec.instance_id, rec.split) != rec.split:
                raise ValidationError(f"instance {rec.instance_id!r} appears in several splits")
            if rec.text is not None:
                if texts.setdefault(rec.instance_id, rec.text) != rec.text:
                    raise ValidationError(f"instance {rec.instance_id!r} has conflicting texts")
        return cls(tuple(annotators), tuple(instances), entries, scheme, splits, texts)

    @property
    def n_annotators(self) -> int:
        return len(self.annotators)

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    @cached_property
    def _by_instance(self) -> list[list[tuple[int, LabelSet]]]:
        rows: list[list] = [[] for _ in self.instances]
        for (i, j), labels in sorted(self.entries.items()):
            rows[j].append((i, labels))
        return rows

    @cached_property
    def _by_annotator(self) -> list[dict[int, LabelSet]]:
        cols: list[dict] = [{} for _ in self.annotators]
        for (i, j), labels in sorted(self.entries.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            cols[i][j] = labels
        return cols

    def instance_annotations(self, j: int) -> list[tuple[int, LabelSet]]:
        """(annotator index, labels) for every annotator of instance ``j``, by annotator index."""
        return self._by_instance[j]

    def annotator_annotations(self, i: int) -> dict[int, LabelSet]:
        """instance index -> labels for annotator ``i``, in instance order."""
        return self._by_annotator[i]

    def annotators_per_instance(self) -> list[int]:
        return [len(row) for row in self._by_instance]

    def label_counts(self) -> dict[str, int]:
        """How often each scheme label was assigned across all annotations."""
        counts = {lab: 0 for lab in self.scheme.labels}
        for labels in self.entries.values():
            for lab in labels:
                counts[lab] += 1
        return counts

    def split_of(self, j: int) -> str:
        return self.splits[self.instances[j]]

    def text_of(self, j: int) -> str | None:
        return self.texts.get(self.instances[j])

    def records(self) -> Iterator[AnnotationRecord]:
        # insertion order, so write/load round trips keep annotator and instance order
        for (i, j), labels in self.entries.items():
            inst = self.instances[j]
            yield AnnotationRecord(inst, self.annotators[i], labels, self.splits[inst], self.texts.get(inst))

    def restrict(self, split: str | Iterable[str]) -> "AnnotationMatrix":
        """Sub-matrix holding only instances from the given split(s); annotators left without data are dropped."""
        keep = {split} if isinstance(split, str) else set(split)
        recs = [r for r in self.records() if r.split in keep]
        if not recs:
            raise InvalidInputError(f"no annotations in split(s) {sorted(keep)}")
        return AnnotationMatrix.from_records(recs, self.scheme)


def iter_records(path: str | Path, scheme: LabelScheme) -> Iterator[AnnotationRecord]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
            try:
                yield parse_record(payload, scheme)
            except ValidationError as exc:
                raise type(exc)(f"line {lineno}: {exc}") from None


def load_dataset(path: str | Path, scheme: LabelScheme) -> AnnotationMatrix:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    records = list(iter_records(path, scheme))
    if not records:
        raise InvalidInputError(f"{path} holds no annotation records")
    return AnnotationMatrix.from_records(records, scheme)


def write_dataset(matrix: AnnotationMatrix, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for rec in matrix.records():
            handle.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def load_scheme(path: str | Path) -> LabelScheme:
    with Path(path).open("r", encoding="utf-8") as handle:
        return LabelScheme.from_dict(json.load(handle))
