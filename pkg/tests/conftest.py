import json

import pytest

from crowdcluster.dataset import AnnotationMatrix, AnnotationRecord, LabelScheme

SENTIMENT = LabelScheme("multiclass", ("neg", "neu", "pos"))
EMOTION = LabelScheme("multilabel", ("anger", "fear", "joy", "sadness"))
HATE = LabelScheme("multiclass", ("abuse", "hate", "neutral"), tie_priority=("hate", "abuse"))


def make_matrix(rows, scheme=SENTIMENT, split="train", texts=None):
    """rows: iterable of (instance, annotator, labels) with labels a str or an iterable of str."""
    recs = []
    for inst, ann, labels in rows:
        labels = frozenset([labels]) if isinstance(labels, str) else frozenset(labels)
        sp = split(inst) if callable(split) else split
        recs.append(AnnotationRecord(inst, ann, labels, sp, None if texts is None else texts[inst]))
    return AnnotationMatrix.from_records(recs, scheme)


def write_jsonl(path, payloads):
    path.write_text("".join(json.dumps(p) + "\n" for p in payloads), encoding="utf-8")
    return path


@pytest.fixture
def sentiment():
    return SENTIMENT


@pytest.fixture
def emotion():
    return EMOTION


@pytest.fixture
def hate():
    return HATE


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS: dict = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ACCEPTANCE_RESULTS[crit] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE_RESULTS, key=lambda c: int(c.split(":")[0])):
        outcome = ACCEPTANCE_RESULTS[crit]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  criterion {crit}")
