import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdcluster.aggregation import (
    GLOBAL_MAJORITY, HALF_VOTE, LEXICOGRAPHIC, PRIORITY_LABEL, TieBreakPolicy, aggregate_clusters, majority_vote,
    vote,
)
from crowdcluster.clustering import ClusterAssignment, identity_assignment
from crowdcluster.errors import ConfigError, ConsistencyError, InvalidInputError

from conftest import EMOTION, HATE, SENTIMENT, make_matrix


def s(*labels):
    return frozenset(labels)


def default(scheme):
    return TieBreakPolicy.for_scheme(scheme)


def test_strict_majority():
    assert majority_vote([s("pos"), s("pos"), s("neg")], SENTIMENT, default(SENTIMENT)) == s("pos")


def test_hate_priority_breaks_tie():
    labels, tie = vote([s("hate"), s("abuse"), s("hate"), s("abuse")], HATE, default(HATE))
    assert labels == s("hate")
    assert tie.rule == PRIORITY_LABEL and tie.candidates == ("abuse", "hate")


def test_multilabel_per_label_majority():
    assert majority_vote([s("joy"), s("joy", "fear"), s("fear")], EMOTION, default(EMOTION)) == s("joy", "fear")


def test_multilabel_half_tie_keeps_both():
    labels, tie = vote([s("anger"), s("fear")], EMOTION, default(EMOTION))
    assert labels == s("anger", "fear") and tie.rule == HALF_VOTE


def test_global_majority_then_lexicographic():
    policy = TieBreakPolicy((GLOBAL_MAJORITY, LEXICOGRAPHIC))
    pair = [s("pos"), s("neg")]
    assert vote(pair, SENTIMENT, policy, {"pos": 5, "neg": 2})[0] == s("pos")
    labels, tie = vote(pair, SENTIMENT, policy, {"pos": 2, "neg": 2})
    assert labels == s("neg") and tie.rule == LEXICOGRAPHIC


def test_empty_vote():
    with pytest.raises(InvalidInputError):
        majority_vote([], SENTIMENT, default(SENTIMENT))


def test_policy_must_end_lexicographically():
    with pytest.raises(ConfigError):
        TieBreakPolicy((PRIORITY_LABEL,))


@given(st.lists(st.sampled_from(["neg", "neu", "pos"]), min_size=1, max_size=9), st.randoms())
def test_vote_order_invariant(labels, rnd):
    shuffled = list(labels)
    rnd.shuffle(shuffled)
    policy = default(SENTIMENT)
    sets = lambda xs: [s(x) for x in xs]
    assert majority_vote(sets(labels), SENTIMENT, policy) == majority_vote(sets(shuffled), SENTIMENT, policy)


def test_cluster_majority_and_missing():
    rows = [
        ("x1", "a1", "pos"), ("x1", "a2", "pos"), ("x1", "a3", "neg"),
        ("x2", "a1", "neg"), ("x2", "a2", "neg"), ("x2", "a3", "neu"),
        ("x3", "a1", "neu"), ("x3", "a2", "neu"),
    ]
    m = make_matrix(rows)
    assignment = ClusterAssignment(2, {"a1": 0, "a2": 0, "a3": 1}, "kmeans", 0, 0.0)
    cd = aggregate_clusters(m, assignment, default(SENTIMENT))
    assert cd.cluster_labels[0] == (s("pos"), s("neg"))
    assert cd.cluster_labels[2] == (s("neu"), None)
    assert cd.coverage == (1.0, pytest.approx(2 / 3))
    assert cd.gold == (s("pos"), s("neg"), s("neu"))


def test_three_clusters_one_missing_instance():
    m_inst = 6
    rows = [(f"x{j}", a, "pos") for j in range(m_inst) for a in ("a", "b", "c") if not (a == "c" and j == 4)]
    rows.append(("x4", "d", "pos"))
    m = make_matrix(rows)
    cd = aggregate_clusters(m, ClusterAssignment(3, {"a": 0, "b": 1, "c": 2, "d": 0}, "kmeans", 0, 0.0),
                            default(SENTIMENT))
    assert cd.coverage[2] == pytest.approx((m_inst - 1) / m_inst)
    assert cd.column(2)[4] is None


def test_condition_one_identity_labels():
    rows = [(f"x{j}", f"a{i}", ["neg", "neu", "pos"][(i + j) % 3]) for j in range(5) for i in range(3)]
    m = make_matrix(rows)
    cd = aggregate_clusters(m, identity_assignment(m.annotators), default(SENTIMENT))
    for (i, j), labels in m.entries.items():
        assert cd.cluster_labels[j][i] == labels


def test_multilabel_cluster_tie_union():
    m = make_matrix([("x1", "a", ["anger"]), ("x1", "b", ["fear"])], scheme=EMOTION)
    cd = aggregate_clusters(m, ClusterAssignment(1, {"a": 0, "b": 0}, "kmeans", 0, 0.0), default(EMOTION))
    assert cd.cluster_labels[0][0] == s("anger", "fear")
    assert any(t.stage == "cluster" for t in cd.ties)


def test_missing_annotator_in_assignment():
    m = make_matrix([("x1", "a", "pos"), ("x1", "b", "neg"), ("x1", "c", "neg")])
    with pytest.raises(ConsistencyError, match="'c'"):
        aggregate_clusters(m, ClusterAssignment(1, {"a": 0, "b": 0}, "kmeans", 0, 0.0), default(SENTIMENT))


def test_ties_csv_lists_every_tie():
    rows = [("x1", "a", "hate"), ("x1", "b", "abuse"), ("x1", "c", "hate"), ("x1", "d", "abuse")]
    m = make_matrix(rows, scheme=HATE)
    cd = aggregate_clusters(m, ClusterAssignment(2, {"a": 0, "b": 0, "c": 1, "d": 1}, "kmeans", 0, 0.0),
                            default(HATE))
    lines = cd.ties_csv().strip().splitlines()
    assert len(lines) == 1 + len(cd.ties) == 4  # header, gold tie, two cluster ties
    assert all(line.endswith(",hate,priority_label") for line in lines[1:])


def test_aggregation_deterministic():
    rows = [(f"x{j}", f"a{i}", ["neg", "pos"][(i * j) % 2]) for j in range(6) for i in range(4)]
    m = make_matrix(rows)
    a = ClusterAssignment(2, {"a0": 0, "a1": 1, "a2": 0, "a3": 1}, "kmeans", 0, 0.0)
    first, second = aggregate_clusters(m, a, default(SENTIMENT)), aggregate_clusters(m, a, default(SENTIMENT))
    assert first == second and first.to_jsonl() == second.to_jsonl()
