"""Partition annotators into clusters from their agreement distances."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .agreement import DistanceMatrix
from .dataset import AnnotationMatrix
from .errors import ConfigError, InvalidInputError

IDENTITY = "identity"
KMEANS = "kmeans"
KMEDOIDS = "kmedoids"
METHODS = (KMEANS, KMEDOIDS)


class EvenClusterCountWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ClusterAssignment:
    n_clusters: int
    membership: dict  # annotator id -> cluster index
    method: str
    seed: int
    inertia: float

    def __post_init__(self):
        used = set(self.membership.values())
        if used != set(range(self.n_clusters)):
            raise InvalidInputError(f"clusters must be exactly 0..{self.n_clusters - 1}, got {sorted(used)}")
        if (self.method == IDENTITY) != (self.n_clusters == len(self.membership)):
            raise InvalidInputError("identity assignment iff one cluster per annotator")

    def members(self, c: int) -> list[str]:
        return [a for a, k in self.membership.items() if k == c]

    def to_json(self) -> dict:
        return {
            "membership": dict(self.membership),
            "provenance": {
                "n_clusters": self.n_clusters,
                "method": self.method,
                "seed": self.seed,
                "inertia": self.inertia,
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "ClusterAssignment":
        prov = data["provenance"]
        return cls(
            n_clusters=int(prov["n_clusters"]),
            membership={str(k): int(v) for k, v in data["membership"].items()},
            method=prov["method"],
            seed=int(prov["seed"]),
            inertia=float(prov["inertia"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def identity_assignment(annotators, seed: int = 0) -> ClusterAssignment:
    """Every annotator is its own cluster."""
    return ClusterAssignment(len(annotators), {a: i for i, a in enumerate(annotators)}, IDENTITY, seed, 0.0)


def cluster_count(matrix: AnnotationMatrix, override: int | None = None) -> int:
    """Number of clusters: the override, else the smallest per-instance annotator count."""
    n = matrix.n_annotators
    if override is not None:
        if not 2 <= override <= n:
            raise ConfigError(f"cluster override must be in [2, {n}], got {override}")
        count = override
    else:
        count = min(matrix.annotators_per_instance())
        if count < 2:
            raise ConfigError(
                "some instance has a single annotator, so the minimum-coverage rule gives C=1; "
                "pass an explicit cluster count"
            )
    if count % 2 == 0:
        warnings.warn(
            f"C={count} is even; odd cluster counts avoid ties when voting over clusters",
            EvenClusterCountWarning,
            stacklevel=2,
        )
    return count


def _relabel(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters by first appearance so equal partitions get equal labels."""
    mapping: dict[int, int] = {}
    return np.array([mapping.setdefault(int(x), len(mapping)) for x in labels])


def _plusplus(points_dist: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """k-means++ seeding on a precomputed squared-distance matrix; returns point indices."""
    n = points_dist.shape[0]
    centers = [int(rng.integers(n))]
    closest = points_dist[centers[0]].copy()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a center: take the first unused one
            nxt = next(i for i in range(n) if i not in centers)
        else:
            nxt = int(rng.choice(n, p=closest / total))
            if nxt in centers:
                nxt = next(i for i in range(n) if i not in centers)
        centers.append(nxt)
        closest = np.minimum(closest, points_dist[nxt])
    return centers


def _repair_empty(labels: np.ndarray, cost: np.ndarray, k: int) -> np.ndarray:
    """Move the point farthest from its own center into each empty cluster."""
    labels = labels.copy()
    own = cost[np.arange(len(labels)), labels].copy()
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        movable = counts[labels] > 1
        idx = int(np.argmax(np.where(movable, own, -np.inf)))
        labels[idx] = c
        own[idx] = -np.inf
    return labels


def _kmeans_once(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int):
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    centers = x[_plusplus(sq, k, rng)].copy()
    labels = None
    for _ in range(max_iter):
        cost = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        new = _repair_empty(np.argmin(cost, axis=1), cost, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.stack([x[labels == c].mean(axis=0) for c in range(k)])
    cost = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    inertia = float(cost[np.arange(len(x)), labels].sum())
    return labels, inertia


def _kmedoids_once(d: np.ndarray, k: int, rng: np.random.Generator, max_iter: int):
    medoids = np.array(_plusplus(d**2, k, rng))
    labels = None
    for _ in range(max_iter):
        cost = d[:, medoids]
        new = np.argmin(cost, axis=1)
        new[medoids] = np.arange(k)
        new = _repair_empty(new, cost, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = np.flatnonzero(labels == c)
            within = d[np.ix_(members, members)].sum(axis=1)
            medoids[c] = members[int(np.argmin(within))]
    inertia = float(d[np.arange(len(d)), medoids[labels]].sum())
    return labels, inertia


def cluster_annotators(
    dist: DistanceMatrix,
    n_clusters: int,
    seed: int = 0,
    restarts: int = 10,
    method: str = KMEANS,
    max_iter: int = 300,
) -> ClusterAssignment:
    """Cluster annotators into ``n_clusters`` groups.

    With one cluster per annotator no clustering runs. Otherwise k-means embeds
    annotator i as row i of the distance matrix; k-medoids uses the distances
    directly. The best of ``restarts`` seeded runs by inertia is kept, ties going
    to the earliest restart.
    """
    names = dist.annotators
    n = len(names)
    if not 2 <= n_clusters <= n:
        raise InvalidInputError(f"cluster count must be in [2, {n}], got {n_clusters}")
    if n_clusters == n:
        return identity_assignment(names, seed)
    if method not in METHODS:
        raise ConfigError(f"unknown clustering method {method!r}; expected one of {METHODS}")
    if restarts < 1:
        raise ConfigError("restarts must be at least 1")
    d = np.asarray(dist.values, dtype=float)
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        if method == KMEANS:
            labels, inertia = _kmeans_once(d, n_clusters, rng, max_iter)
        else:
            labels, inertia = _kmedoids_once(d, n_clusters, rng, max_iter)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    labels = _relabel(best[0])
    membership = {name: int(c) for name, c in zip(names, labels)}
    return ClusterAssignment(n_clusters, membership, method, seed, best[1])
