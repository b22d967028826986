"""Command-line front end.

Every command reads a JSON run configuration (``--config``); flags override it::

    crowdcluster pipeline --config run.json --out runs/pcm
    crowdcluster simulate --spec spec.json --out data/synthetic
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .agreement import pairs_csv, similarity_json, similarity_matrix, to_distance
from .aggregation import TieBreakPolicy, aggregate_clusters, ties_csv
from .clustering import KMEANS, METHODS, ClusterAssignment, cluster_annotators, cluster_count
from .dataset import AnnotationMatrix, LabelScheme, load_dataset, load_scheme
from .errors import ConfigError, CrowdClusterError, StageError
from .evaluation import (
    APPROACHES, CLUSTERED, COMPARISON_COLUMNS, GRANULARITIES, ExperimentPlan,
    cluster_train_split, comparison_table, run_experiment,
)
from .features import FeatureExtractor
from .models import TrainConfig, save_model
from .summary import summarize
from .synthetic import PerspectiveSpec, generate

log = logging.getLogger("crowdcluster")


@dataclass
class RunConfig:
    dataset: str | None = None
    scheme: dict | None = None
    scheme_file: str | None = None
    name: str = "dataset"
    min_overlap: int = 2
    impute: str = "zero"
    clusters: int | None = None
    method: str = KMEANS
    restarts: int = 10
    seed: int = 0
    tie_policy: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    approach: str = "multitask"
    granularity: str = CLUSTERED
    out: str = "out"

    @classmethod
    def from_file(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        # relative paths in a config file are relative to the file
        for key in ("dataset", "scheme_file"):
            value = getattr(cfg, key)
            if value and not Path(value).is_absolute():
                setattr(cfg, key, str(path.parent / value))
        return cfg

    def label_scheme(self) -> LabelScheme:
        if self.scheme is not None:
            return LabelScheme.from_dict(self.scheme)
        if self.scheme_file:
            if not Path(self.scheme_file).is_file():
                raise FileNotFoundError(f"scheme file not found: {self.scheme_file}")
            return load_scheme(self.scheme_file)
        raise ConfigError("no label scheme given (set 'scheme' or 'scheme_file')")

    def load(self) -> AnnotationMatrix:
        if not self.dataset:
            raise ConfigError("no dataset given (set 'dataset' or pass --data)")
        return load_dataset(self.dataset, self.label_scheme())

    def policy(self, scheme: LabelScheme) -> TieBreakPolicy:
        chain = self.tie_policy.get("chain")
        policy = TieBreakPolicy.for_scheme(scheme, chain)
        if "priority" in self.tie_policy:
            policy = replace(policy, priority=tuple(self.tie_policy["priority"]))
        return policy

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({**self.train, "seed": self.seed})

    def plan(self, scheme: LabelScheme, approach: str | None = None, granularity: str | None = None) -> ExperimentPlan:
        return ExperimentPlan(
            approach=approach or self.approach,
            granularity=granularity or self.granularity,
            n_clusters=self.clusters,
            method=self.method,
            restarts=self.restarts,
            min_overlap=self.min_overlap,
            impute=self.impute,
            policy=self.policy(scheme),
            train=self.train_config(),
            features=FeatureExtractor.from_dict({**FeatureExtractor().to_dict(), **self.features}),
        )


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _select(matrix: AnnotationMatrix, split: str) -> AnnotationMatrix:
    return matrix if split == "all" else matrix.restrict(split)


# ---------------------------------------------------------------- commands

def cmd_summarize(cfg: RunConfig, args) -> None:
    matrix = cfg.load()
    summary = summarize(matrix, cfg.policy(matrix.scheme))
    out = Path(cfg.out)
    _write(out / "summary.json", summary.dumps() + "\n")
    _write(out / "summary.csv", summary.csv_row(header=True, name=cfg.name))
    print(summary.dumps())


def _agreement(matrix: AnnotationMatrix, cfg: RunConfig, out: Path):
    sim, pairs = similarity_matrix(matrix, cfg.min_overlap, cfg.impute)
    dist = to_distance(sim)
    _write(out / "similarity.csv", sim.to_csv())
    _write(out / "similarity.json", similarity_json(sim, pairs) + "\n")
    _write(out / "distance.csv", dist.to_csv())
    _write(out / "pairs.csv", pairs_csv(pairs))
    return sim, dist


def cmd_agreement(cfg: RunConfig, args) -> None:
    matrix = _select(cfg.load(), args.split)
    _agreement(matrix, cfg, Path(cfg.out))


def _cluster(matrix: AnnotationMatrix, cfg: RunConfig, out: Path) -> ClusterAssignment:
    _, dist = _agreement(matrix, cfg, out)
    n_clusters = cluster_count(matrix, cfg.clusters)
    assignment = cluster_annotators(dist, n_clusters, seed=cfg.seed, restarts=cfg.restarts, method=cfg.method)
    _write(out / "clusters.json", assignment.dumps() + "\n")
    return assignment


def cmd_cluster(cfg: RunConfig, args) -> None:
    _cluster(_select(cfg.load(), args.split), cfg, Path(cfg.out))


def cmd_aggregate(cfg: RunConfig, args) -> None:
    matrix = cfg.load()
    out = Path(cfg.out)
    if args.assignment:
        assignment = ClusterAssignment.from_json(json.loads(Path(args.assignment).read_text(encoding="utf-8")))
    else:
        assignment = _cluster(_select(matrix, args.split), cfg, out)
    clustered = aggregate_clusters(matrix, assignment, cfg.policy(matrix.scheme))
    _write(out / "clustered_dataset.jsonl", clustered.to_jsonl())
    _write(out / "ties.csv", clustered.ties_csv())


def cmd_train(cfg: RunConfig, args) -> None:
    matrix = cfg.load()
    plan = cfg.plan(matrix.scheme)
    plan = replace(plan, train=replace(plan.train, repeats=1))
    _, artifacts = run_experiment(matrix, plan, keep_first=True)
    out = Path(cfg.out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    save_model(artifacts.model, out / "models" / f"{plan.name}.npz", extra={"seed": cfg.seed})
    if artifacts.assignment is not None:
        _write(out / "clusters.json", artifacts.assignment.dumps() + "\n")


def _evaluate(matrix, cfg: RunConfig, approach: str, granularity: str, out: Path, save_models: bool):
    plan = cfg.plan(matrix.scheme, approach, granularity)
    log.info("running %s", plan.name)
    report, first = run_experiment(matrix, plan, keep_first=True)
    _write(out / "reports" / f"{plan.name}.json", report.dumps() + "\n")
    if save_models:
        (out / "models").mkdir(parents=True, exist_ok=True)
        save_model(first.model, out / "models" / f"{plan.name}.npz", extra={"seed": cfg.seed})
    return plan.name, report, first


def _run_all(matrix, cfg: RunConfig, out: Path, save_models: bool) -> dict:
    reports = {}
    firsts = {}
    for approach, granularity, _ in COMPARISON_COLUMNS:
        name, report, first = _evaluate(matrix, cfg, approach, granularity or CLUSTERED, out, save_models)
        reports[name] = report
        firsts[name] = first
    _write(out / "comparison.md", comparison_table(reports, cfg.name))
    return firsts


def cmd_evaluate(cfg: RunConfig, args) -> None:
    matrix = cfg.load()
    out = Path(cfg.out)
    if args.all:
        _run_all(matrix, cfg, out, save_models=False)
    else:
        _, report, _ = _evaluate(matrix, cfg, cfg.approach, cfg.granularity, out, save_models=False)
        print(report.dumps())


def cmd_simulate(cfg: RunConfig, args) -> None:
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        raise FileNotFoundError(f"spec file not found: {spec_path}")
    data = json.loads(spec_path.read_text(encoding="utf-8"))
    if args.seed is not None:
        data["seed"] = args.seed
    spec = PerspectiveSpec.from_dict(data)
    generate(spec).write(cfg.out)
    _write(Path(cfg.out) / "scheme.json", json.dumps(spec.scheme.to_dict(), indent=2) + "\n")


def cmd_pipeline(cfg: RunConfig, args) -> None:
    """Summary, agreement, clustering, aggregation, then all seven experiment columns."""
    out = Path(cfg.out)
    with _stage("load"):
        matrix = cfg.load()
    policy = cfg.policy(matrix.scheme)
    with _stage("summary"):
        summary = summarize(matrix, policy)
        _write(out / "summary.json", summary.dumps() + "\n")
        _write(out / "summary.csv", summary.csv_row(header=True, name=cfg.name))
    with _stage("agreement"):
        _agreement(matrix.restrict("train"), cfg, out)
    with _stage("clustering"):
        assignment = cluster_train_split(matrix, cfg.plan(matrix.scheme, granularity=CLUSTERED), cfg.seed)
        _write(out / "clusters.json", assignment.dumps() + "\n")
    with _stage("aggregation"):
        clustered = aggregate_clusters(matrix, assignment, policy)
        _write(out / "clustered_dataset.jsonl", clustered.to_jsonl())
        _write(out / "ties.csv", clustered.ties_csv())
    firsts = _run_all(matrix, cfg, out, save_models=True)
    all_ties = [t for name in sorted(firsts) for t in firsts[name].ties if t.stage == "prediction"]
    _write(out / "prediction_ties.csv", ties_csv(all_ties))
    _write(out / "run.json", json.dumps({"version": __version__, "config": _config_dict(cfg)},
                                        indent=2, sort_keys=True) + "\n")


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, CrowdClusterError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _config_dict(cfg: RunConfig) -> dict:
    """The run configuration minus the output directory, so reruns elsewhere match byte for byte."""
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__ if k != "out"}


COMMANDS = {
    "summarize": cmd_summarize,
    "agreement": cmd_agreement,
    "cluster": cmd_cluster,
    "aggregate": cmd_aggregate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--data", help="annotation JSON-lines file (overrides config 'dataset')")
    common.add_argument("--scheme", help="label scheme JSON file (overrides config)")
    common.add_argument("--seed", type=int, help="root random seed")
    common.add_argument("--clusters", type=int, help="number of clusters (default: min annotators per instance)")
    common.add_argument("--method", choices=METHODS, help="clustering algorithm")
    common.add_argument("--approach", choices=APPROACHES, help="aggregation approach")
    common.add_argument("--granularity", choices=GRANULARITIES, help="per-annotator or clustered modelling")
    common.add_argument("--repeats", type=int, help="experiment repeats")
    common.add_argument("--epochs", type=int, help="training epochs")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="crowdcluster", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__)
        if name in ("agreement", "cluster", "aggregate"):
            p.add_argument("--split", default="all", choices=["all", "train", "dev", "test"],
                           help="annotations used for agreement")
        if name == "aggregate":
            p.add_argument("--assignment", help="clusters.json to reuse instead of re-clustering")
        if name == "evaluate":
            p.add_argument("--all", action="store_true", help="run all seven comparison columns")
        if name == "simulate":
            p.add_argument("--spec", required=True, help="simulation spec JSON")
    return parser


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if args.data:
        cfg.dataset = args.data
    if args.scheme:
        cfg.scheme, cfg.scheme_file = None, args.scheme
    for key in ("seed", "clusters", "method", "approach", "granularity", "out"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    for key in ("repeats", "epochs"):
        value = getattr(args, key)
        if value is not None:
            cfg.train = {**cfg.train, key: value}
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CROWDCLUSTER_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(RunConfig.from_file(args.config), args)
        COMMANDS[args.command](cfg, args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    except CrowdClusterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
