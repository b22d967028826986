import pytest

from crowdcluster.dataset import AnnotationMatrix, LabelScheme, load_dataset, write_dataset
from crowdcluster.errors import DuplicateError, ParseError, ValidationError

from conftest import write_jsonl


def rec(inst, ann, labels, split="train", **kw):
    return {"instance_id": inst, "annotator_id": ann, "labels": labels, "split": split, **kw}


def test_load_counts(tmp_path, sentiment):
    path = write_jsonl(tmp_path / "d.jsonl", [
        rec("x1", "a1", ["pos"]), rec("x1", "a2", ["neg"]), rec("x2", "a1", ["neu"]),
    ])
    m = load_dataset(path, sentiment)
    assert (m.n_annotators, m.n_instances, len(m.entries)) == (2, 2, 3)
    assert m.annotators == ("a1", "a2")
    assert m.entries[(0, 1)] == frozenset({"neu"})


def test_label_outside_scheme(tmp_path, sentiment):
    path = write_jsonl(tmp_path / "d.jsonl", [rec("x1", "a1", ["pos"]), rec("x1", "a2", ["positif"])])
    with pytest.raises(ValidationError, match="line 2"):
        load_dataset(path, sentiment)


def test_duplicate_pair(tmp_path, sentiment):
    path = write_jsonl(tmp_path / "d.jsonl", [rec("x1", "a1", ["pos"]), rec("x1", "a1", ["neg"])])
    with pytest.raises(DuplicateError):
        load_dataset(path, sentiment)


def test_malformed_line_reports_line_number(tmp_path, sentiment):
    path = tmp_path / "d.jsonl"
    path.write_text('{"instance_id": "x1", "annotator_id": "a1", "labels": ["pos"], "split": "train"}\n{oops\n')
    with pytest.raises(ParseError) as info:
        load_dataset(path, sentiment)
    assert info.value.line == 2


def test_missing_file(tmp_path, sentiment):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope.jsonl", sentiment)


@pytest.mark.parametrize("labels", [[], ["pos", "neg"]])
def test_multiclass_requires_single_label(tmp_path, sentiment, labels):
    path = write_jsonl(tmp_path / "d.jsonl", [rec("x1", "a1", labels)])
    with pytest.raises(ValidationError):
        load_dataset(path, sentiment)


def test_multilabel_accepts_empty_set(tmp_path, emotion):
    path = write_jsonl(tmp_path / "d.jsonl", [rec("x1", "a1", []), rec("x1", "a2", ["joy", "fear"])])
    m = load_dataset(path, emotion)
    assert m.entries[(0, 0)] == frozenset()
    assert m.entries[(1, 0)] == frozenset({"joy", "fear"})


def test_conflicting_split_rejected(tmp_path, sentiment):
    path = write_jsonl(tmp_path / "d.jsonl", [rec("x1", "a1", ["pos"]), rec("x1", "a2", ["pos"], split="test")])
    with pytest.raises(ValidationError, match="several splits"):
        load_dataset(path, sentiment)


def test_round_trip(tmp_path, emotion):
    path = write_jsonl(tmp_path / "d.jsonl", [
        rec("x2", "b", ["joy"], text="hello"), rec("x1", "a", []), rec("x2", "a", ["anger", "fear"], text="hello"),
        rec("x1", "c", ["sadness"], split="train"),
    ])
    m = load_dataset(path, emotion)
    write_dataset(m, tmp_path / "again.jsonl")
    again = load_dataset(tmp_path / "again.jsonl", emotion)
    assert again == m
    assert again.annotators == ("b", "a", "c")


@pytest.mark.parametrize("kwargs", [
    dict(task_kind="multiclass", labels=()),
    dict(task_kind="multiclass", labels=("a", "a")),
    dict(task_kind="multiclass", labels=("a", "b"), tie_priority=("c",)),
    dict(task_kind="ordinal", labels=("a",)),
])
def test_scheme_invariants(kwargs):
    with pytest.raises(ValidationError):
        LabelScheme(**kwargs)


def test_restrict_drops_idle_annotators(sentiment):
    from conftest import make_matrix
    m = make_matrix([("x1", "a1", "pos"), ("x2", "a2", "neg")], split=lambda i: "train" if i == "x1" else "test")
    sub = m.restrict("train")
    assert sub.annotators == ("a1",) and sub.instances == ("x1",)


def test_matrix_rejects_annotator_without_entries(sentiment):
    with pytest.raises(ValidationError):
        AnnotationMatrix(("a1", "a2"), ("x1",), {(0, 0): frozenset({"pos"})}, sentiment, {"x1": "train"})
