"""Annotator clustering, per-cluster aggregation and perspective-aware classifiers."""

__version__ = "0.1.0"

from .errors import CrowdClusterError
from .dataset import AnnotationMatrix, LabelScheme, load_dataset
from .agreement import similarity_matrix, to_distance
from .clustering import ClusterAssignment, cluster_annotators
from .aggregation import TieBreakPolicy, aggregate_clusters
from .evaluation import ExperimentPlan, run_experiment

__all__ = [
    "AnnotationMatrix", "ClusterAssignment", "CrowdClusterError", "ExperimentPlan", "LabelScheme",
    "TieBreakPolicy", "aggregate_clusters", "cluster_annotators", "load_dataset", "run_experiment",
    "similarity_matrix", "to_distance",
]
