import filecmp
import json
from importlib.resources import files
from pathlib import Path

import jsonschema
import pytest

from crowdcluster.cli import main
from crowdcluster.dataset import LabelScheme, load_dataset

SPEC = {"labels": ["neg", "neu", "pos"], "annotators_per_perspective": [2, 2, 2], "diagonal": 0.85,
        "n_instances": 150, "seed": 1, "workload": "skewed", "skew_alpha": 1.0}
RUN = {"dataset": "data/dataset.jsonl", "scheme_file": "data/scheme.json", "name": "synthetic", "clusters": 3,
       "train": {"epochs": 2, "repeats": 2, "hidden_dim": 16}, "features": {"dimension": 16384}}
PIPELINE_FILES = ("summary.json", "similarity.csv", "distance.csv", "clusters.json", "clustered_dataset.jsonl",
                  "comparison.md", "ties.csv")


def schema(name):
    return json.loads((files("crowdcluster") / "schemas" / f"{name}.json").read_text())


def simulate(root: Path, spec=SPEC, out="data"):
    (root / "spec.json").write_text(json.dumps(spec))
    return main(["simulate", "--spec", str(root / "spec.json"), "--out", str(root / out)])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert simulate(root) == 0
    (root / "run.json").write_text(json.dumps(RUN))
    assert main(["pipeline", "--config", str(root / "run.json"), "--out", str(root / "out1")]) == 0
    assert main(["pipeline", "--config", str(root / "run.json"), "--out", str(root / "out2")]) == 0
    return root


def test_pipeline_writes_artifacts(workspace):
    out = workspace / "out1"
    for name in PIPELINE_FILES:
        assert (out / name).is_file(), name
    assert len(list((out / "models").glob("*.npz"))) == 7
    assert len(list((out / "reports").glob("*.json"))) == 7


def test_comparison_has_seven_result_columns(workspace):
    header = (workspace / "out1" / "comparison.md").read_text().splitlines()[0]
    cells = [c.strip() for c in header.strip("|").split("|")]
    assert cells[0] == "Dataset" and len(cells[1:]) == 7


def test_pipeline_is_deterministic(workspace):
    a, b = workspace / "out1", workspace / "out2"
    names = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(n) for n in names], shallow=False)
    assert mismatch == [] and errors == []


def test_emitted_json_matches_schemas(workspace):
    out, data = workspace / "out1", workspace / "data"
    checks = {"summary": [out / "summary.json"], "similarity": [out / "similarity.json"],
              "clusters": [out / "clusters.json"], "run": [out / "run.json"],
              "report": sorted((out / "reports").glob("*.json")), "planted": [data / "planted.json"],
              "scheme": [data / "scheme.json"]}
    for name, paths in checks.items():
        for path in paths:
            jsonschema.validate(json.loads(path.read_text()), schema(name))
    for name, path in (("clustered_dataset_line", out / "clustered_dataset.jsonl"),
                       ("dataset_record", data / "dataset.jsonl")):
        for line in path.read_text().splitlines():
            jsonschema.validate(json.loads(line), schema(name))


def test_simulated_data_loads(workspace):
    scheme = LabelScheme.from_dict(json.loads((workspace / "data" / "scheme.json").read_text()))
    assert load_dataset(workspace / "data" / "dataset.jsonl", scheme).n_instances == 150


def test_simulate_seed_changes_output(tmp_path):
    assert simulate(tmp_path, out="a") == 0
    assert main(["simulate", "--spec", str(tmp_path / "spec.json"), "--seed", "2", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "dataset.jsonl").read_text() != (tmp_path / "b" / "dataset.jsonl").read_text()


def test_invalid_spec_exits_2(tmp_path, capsys):
    assert simulate(tmp_path, {**SPEC, "annotators_per_perspective": [1, 1], "annotations_per_instance": 3}) == 2
    assert "annotations_per_instance" in capsys.readouterr().err


def test_missing_dataset_exits_2(workspace, tmp_path, capsys):
    missing = tmp_path / "nowhere.jsonl"
    code = main(["pipeline", "--config", str(workspace / "run.json"), "--data", str(missing),
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_stage_failure_is_tagged(workspace, tmp_path, capsys):
    code = main(["pipeline", "--config", str(workspace / "run.json"), "--clusters", "99",
                 "--out", str(tmp_path / "o")])
    assert code != 0
    assert "[clustering]" in capsys.readouterr().err


@pytest.mark.parametrize("command,expected", [
    (["summarize"], ["summary.json", "summary.csv"]),
    (["agreement", "--split", "train"], ["similarity.csv", "distance.csv", "pairs.csv"]),
    (["cluster"], ["clusters.json"]),
    (["aggregate"], ["clustered_dataset.jsonl", "ties.csv"]),
    (["train", "--approach", "ensemble"], ["models/clustered-ensemble.npz", "clusters.json"]),
    (["evaluate", "--approach", "majority"], ["reports/majority.json"]),
])
def test_subcommands(workspace, tmp_path, command, expected):
    out = tmp_path / "o"
    assert main([*command, "--config", str(workspace / "run.json"), "--out", str(out)]) == 0
    for name in expected:
        assert (out / name).is_file(), name


def test_aggregate_reuses_assignment(workspace, tmp_path):
    out = tmp_path / "o"
    code = main(["aggregate", "--config", str(workspace / "run.json"), "--assignment",
                 str(workspace / "out1" / "clusters.json"), "--out", str(out)])
    assert code == 0 and not (out / "clusters.json").exists()


def test_unknown_config_key(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"datasett": "x"}))
    assert main(["summarize", "--config", str(tmp_path / "bad.json")]) == 2
    assert "datasett" in capsys.readouterr().err
