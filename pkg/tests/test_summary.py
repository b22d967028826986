import pytest

from crowdcluster.summary import NO_LABEL_KEY, summarize

from conftest import EMOTION, make_matrix


def test_full_agreement_percent():
    rows = []
    for j in range(4):
        for i in range(3):
            rows.append((f"x{j}", f"a{i}", "neg" if (j == 3 and i == 0) else "pos"))
    assert summarize(make_matrix(rows)).pct_full_agreement == 75.0


def test_annotators_per_instance_stats():
    counts = [3, 3, 4, 5]
    rows = [(f"x{j}", f"a{i}", "pos") for j, n in enumerate(counts) for i in range(n)]
    summary = summarize(make_matrix(rows))
    assert summary.annotators_per_instance_min == 3
    assert summary.annotators_per_instance_max == 5
    assert summary.annotators_per_instance_mean == pytest.approx(3.75)
    assert summary.total_annotators == 5
    assert summary.annotation_counts_per_annotator == {"a0": 4, "a1": 4, "a2": 4, "a3": 2, "a4": 1}


def test_identical_annotators_kappa_one():
    labels = ["pos", "neg", "neu", "pos", "neg"]
    rows = [(f"x{j}", a, lab) for j, lab in enumerate(labels) for a in ("a", "b")]
    assert summarize(make_matrix(rows)).overall_kappa == 1.0


def test_split_counts_and_distribution():
    split = {"x0": "train", "x1": "train", "x2": "dev", "x3": "test"}
    rows = [(f"x{j}", a, lab) for j, lab in enumerate(["pos", "pos", "neg", "neu"]) for a in ("a", "b")]
    summary = summarize(make_matrix(rows, split=split.get))
    assert (summary.n_train, summary.n_dev, summary.n_test) == (2, 1, 1)
    assert summary.label_distribution == {"neg": 25.0, "neu": 25.0, "pos": 50.0}


def test_multilabel_distribution_has_no_label_bucket():
    rows = [("x0", "a", []), ("x0", "b", []), ("x1", "a", ["joy"]), ("x1", "b", ["joy"])]
    summary = summarize(make_matrix(rows, scheme=EMOTION))
    assert summary.label_distribution[NO_LABEL_KEY] == 50.0
    assert summary.label_distribution["joy"] == 50.0


def test_csv_row_has_header():
    rows = [("x0", "a", "pos"), ("x0", "b", "pos")]
    text = summarize(make_matrix(rows)).csv_row(header=True, name="toy")
    header, row = text.strip().splitlines()
    assert header.startswith("dataset,") and row.startswith("toy,")
    assert len(header.split(",")) == len(row.split(","))
