import json
from itertools import combinations

import numpy as np
import pytest

from crowdcluster.agreement import cohen_kappa
from crowdcluster.dataset import load_dataset
from crowdcluster.errors import SpecError
from crowdcluster.summary import summarize
from crowdcluster.synthetic import PerspectiveSpec, generate, perspective_confusion

LABELS = ("neg", "neu", "pos")


def test_single_perspective_identity_full_agreement():
    spec = PerspectiveSpec(LABELS, (4,), [np.eye(3)], n_instances=200, seed=3)
    summary = summarize(generate(spec).matrix)
    assert summary.pct_full_agreement == 100.0


def pair_kappa(matrix, i, k):
    a, b = matrix.annotator_annotations(i), matrix.annotator_annotations(k)
    shared = [j for j in a if j in b]
    if len(shared) < 2:
        return None
    return cohen_kappa([next(iter(a[j])) for j in shared], [next(iter(b[j])) for j in shared])


def test_intra_perspective_kappa_exceeds_inter():
    gaps = []
    for seed in range(20):
        ds = generate(PerspectiveSpec.planted(LABELS, (3, 3, 3), 0.9, n_instances=500, seed=seed))
        m = ds.matrix
        intra, inter = [], []
        for i, k in combinations(range(m.n_annotators), 2):
            score = pair_kappa(m, i, k)
            if score is None:
                continue
            same = ds.planted[m.annotators[i]] == ds.planted[m.annotators[k]]
            (intra if same else inter).append(score)
        gaps.append(np.mean(intra) - np.mean(inter))
    assert np.mean(gaps) > 0.3


def test_skewed_workload_ratio():
    spec = PerspectiveSpec.planted(LABELS, (4, 4, 3), workload="skewed", skew_alpha=2.0, n_instances=2000, seed=0)
    counts = summarize(generate(spec).matrix).annotation_counts_per_annotator
    assert len(counts) == 11
    assert max(counts.values()) / min(counts.values()) > 5


def test_infeasible_spec():
    with pytest.raises(SpecError):
        PerspectiveSpec.planted(LABELS, (1, 1), annotations_per_instance=3)


def test_confusion_rows_validated():
    with pytest.raises(SpecError):
        PerspectiveSpec(LABELS, (2,), [np.full((3, 3), 0.5)])


def test_confusion_puts_diagonal_on_view():
    m = perspective_confusion([1, 2, 0], 0.9)
    assert m[0, 1] == 0.9 and m[0, 0] == pytest.approx(0.05)
    np.testing.assert_allclose(m.sum(axis=1), 1.0)


def test_generation_is_seeded_and_writes_loadable_files(tmp_path):
    spec = PerspectiveSpec.planted(LABELS, (2, 2, 2), n_instances=50, seed=9)
    a, b = generate(spec), generate(spec)
    assert a.matrix == b.matrix
    a.write(tmp_path)
    again = load_dataset(tmp_path / "dataset.jsonl", spec.scheme)
    assert again == a.matrix
    truth = json.loads((tmp_path / "planted.json").read_text())
    assert set(truth["planted"]) == set(a.matrix.annotators)
    other = generate(PerspectiveSpec.planted(LABELS, (2, 2, 2), n_instances=50, seed=10))
    assert other.matrix != a.matrix


def test_multilabel_generation():
    spec = PerspectiveSpec(("anger", "joy"), (2, 2), [[0.0, 0.0], [0.3, 0.3]], task_kind="multilabel",
                           n_instances=100, seed=1)
    ds = generate(spec)
    assert ds.matrix.scheme.multilabel
    assert any(not labels for labels in ds.true_labels.values())


def test_spec_dict_round_trip():
    spec = PerspectiveSpec.planted(LABELS, (2, 2, 2), workload="skewed", seed=4)
    again = PerspectiveSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()


def test_custom_vocabulary():
    vocab = {"anger": ["furious", "rage"], "joy": ["glad", "sunny"]}
    spec = PerspectiveSpec(("anger", "joy"), (3,), [[0.0, 0.0]], task_kind="multilabel", vocabulary_per_class=vocab,
                           overlap=0.0, n_instances=40, seed=2)
    ds = generate(spec)
    words = set(vocab["anger"] + vocab["joy"])
    for j, inst in enumerate(ds.matrix.instances):
        tokens = set(ds.matrix.text_of(j).split())
        if ds.true_labels[inst]:
            assert tokens <= words
    with pytest.raises(SpecError, match="joy"):
        PerspectiveSpec(("anger", "joy"), (3,), [[0.0, 0.0]], task_kind="multilabel",
                        vocabulary_per_class={"anger": ["x"]})
