"""Classifiers for the four aggregation regimes, trained with seeded minibatch SGD.

* ``SingleTaskModel``: one linear softmax (or per-label logistic) classifier.
* ``EnsembleModel``: one ``SingleTaskModel`` per cluster, each on its own label column.
* ``MultiLabelHeadModel``: one linear layer with C blocks of independent sigmoids.
* ``MultitaskModel``: shared ReLU projection with one head per cluster.

Weights are kept only for hashed feature columns seen in training (rows of the
weight tables); unseen columns behave as zero weights.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .aggregation import ClusteredDataset
from .dataset import LabelScheme
from .errors import ConfigError, InvalidInputError, ModelFormatError, ShapeError
from .features import FeatureExtractor

FORMAT_VERSION = 1
SOFTMAX = "softmax"
SIGMOID = "sigmoid"
PROJECTION_INIT_SCALE = 0.1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.1
    lr_decay: float = 0.9  # learning rate is multiplied by this after every epoch
    batch_size: int = 32
    seed: int = 0
    repeats: int = 5
    hidden_dim: int = 256

    def __post_init__(self):
        for name in ("epochs", "batch_size", "repeats", "hidden_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


# ---------------------------------------------------------------- helpers

def encode_targets(rows: Sequence[Sequence], scheme: LabelScheme) -> tuple[np.ndarray, np.ndarray]:
    """Turn per-instance tuples of C label sets (None = missing) into (targets, mask).

    targets has shape (n, C, L) with 0/1 entries; mask has shape (n, C).
    """
    n = len(rows)
    c = len(rows[0]) if n else 0
    targets = np.zeros((n, c, len(scheme.labels)))
    mask = np.zeros((n, c))
    index = {lab: k for k, lab in enumerate(scheme.labels)}
    for i, row in enumerate(rows):
        if len(row) != c:
            raise ShapeError("ragged target rows")
        for t, labels in enumerate(row):
            if labels is None:
                continue
            mask[i, t] = 1.0
            for lab in labels:
                targets[i, t, index[lab]] = 1.0
    return targets, mask


def _compact_batch(xb: sp.csr_matrix) -> tuple[np.ndarray, sp.csr_matrix]:
    """Columns used by a batch and the batch re-indexed onto those columns."""
    cols, inv = np.unique(xb.indices, return_inverse=True)
    return cols, sp.csr_matrix((xb.data, inv, xb.indptr), shape=(xb.shape[0], len(cols)))


def _project_columns(x: sp.csr_matrix, columns: np.ndarray) -> sp.csr_matrix:
    """Re-index a hashed feature matrix onto a model's known columns, dropping the rest."""
    x = sp.csr_matrix(x)
    if len(columns) == 0:
        return sp.csr_matrix((x.shape[0], 0))
    pos = np.searchsorted(columns, x.indices)
    pos_c = np.minimum(pos, len(columns) - 1)
    keep = columns[pos_c] == x.indices
    rows = np.repeat(np.arange(x.shape[0]), np.diff(x.indptr))
    return sp.csr_matrix((x.data[keep], (rows[keep], pos_c[keep])), shape=(x.shape[0], len(columns)))


def _head_loss(z: np.ndarray, targets: np.ndarray, mask: np.ndarray, activation: str):
    """Masked loss summed over the batch, and its gradient w.r.t. the logits."""
    if activation == SOFTMAX:
        zmax = z.max(axis=2, keepdims=True)
        ez = np.exp(z - zmax)
        tot = ez.sum(axis=2, keepdims=True)
        logp = z - zmax - np.log(tot)
        loss = -(targets * logp).sum(axis=2)
        grad = ez / tot - targets
    else:
        loss = (np.logaddexp(0.0, z) - targets * z).sum(axis=2)
        grad = 1.0 / (1.0 + np.exp(-z)) - targets
    return float((loss * mask).sum()), grad * mask[:, :, None]


def _decode(z: np.ndarray, scheme: LabelScheme, activation: str) -> list[list[frozenset]]:
    labels = scheme.labels
    if scheme.multilabel:
        on = z >= 0.0  # sigmoid(z) >= 0.5
        return [[frozenset(labels[k] for k in np.flatnonzero(block)) for block in row] for row in on]
    best = np.argmax(z, axis=2)
    return [[frozenset([labels[k]]) for k in row] for row in best]


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def _check_label_support(targets: np.ndarray, mask: np.ndarray, scheme: LabelScheme, what: str):
    seen = (targets * mask[:, :, None]).sum(axis=(0, 1)) > 0
    absent = [lab for lab, s in zip(scheme.labels, seen) if not s]
    if absent and not scheme.multilabel:
        warnings.warn(f"{what}: no training examples for labels {absent}", stacklevel=3)


# ---------------------------------------------------------------- linear models

@dataclass
class _LinearBlocks:
    """Affine map from features to ``n_blocks`` blocks of label scores."""

    scheme: LabelScheme
    features: FeatureExtractor
    n_blocks: int
    activation: str
    columns: np.ndarray
    weights: np.ndarray  # (n_columns, n_blocks * n_labels)
    bias: np.ndarray  # (n_blocks * n_labels,)
    seed: int = 0
    loss_history: list = field(default_factory=list)

    def logits(self, x: sp.csr_matrix) -> np.ndarray:
        xc = _project_columns(x, self.columns)
        z = xc @ self.weights + self.bias
        return np.asarray(z).reshape(x.shape[0], self.n_blocks, len(self.scheme.labels))

    def loss_and_gradients(self, xc: sp.csr_matrix, targets: np.ndarray, mask: np.ndarray):
        """Batch loss and dense gradients; ``xc`` is already in the model's column space."""
        z = np.asarray(xc @ self.weights + self.bias).reshape(targets.shape)
        loss, dz = _head_loss(z, targets, mask, self.activation)
        dz = dz.reshape(xc.shape[0], -1)
        return loss, {"weights": np.asarray(xc.T @ dz), "bias": dz.sum(axis=0)}

    def _fit(self, xc: sp.csr_matrix, targets: np.ndarray, mask: np.ndarray, config: TrainConfig, rng):
        n = xc.shape[0]
        for epoch in range(config.epochs):
            lr = config.learning_rate * config.lr_decay**epoch
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                cols, xb = _compact_batch(xc[idx])
                w = self.weights[cols]
                z = np.asarray(xb @ w + self.bias).reshape(len(idx), self.n_blocks, -1)
                _, dz = _head_loss(z, targets[idx], mask[idx], self.activation)
                dz = dz.reshape(len(idx), -1)
                self.weights[cols] = w - lr * np.asarray(xb.T @ dz)
                self.bias -= lr * dz.sum(axis=0)
            self.loss_history.append(self.loss_and_gradients(xc, targets, mask)[0])

    def predict(self, texts: Sequence[str]) -> list[list[frozenset]]:
        return _decode(self.logits(self.features.transform(texts)), self.scheme, self.activation)

    def dense_weights(self) -> np.ndarray:
        """Full (n_outputs x dimension) weight matrix."""
        full = np.zeros((self.weights.shape[1], self.features.dimension))
        full[:, self.columns] = self.weights.T
        return full


class SingleTaskModel(_LinearBlocks):
    kind = "single"

    @property
    def n_outputs(self) -> int:
        return 1


class MultiLabelHeadModel(_LinearBlocks):
    kind = "multilabel"

    @property
    def n_outputs(self) -> int:
        return self.n_blocks

    @property
    def output_dim(self) -> int:
        return self.n_blocks * len(self.scheme.labels)


@dataclass
class EnsembleModel:
    members: list

    kind = "ensemble"

    @property
    def scheme(self) -> LabelScheme:
        return self.members[0].scheme

    @property
    def features(self) -> FeatureExtractor:
        return self.members[0].features

    @property
    def n_outputs(self) -> int:
        return len(self.members)

    def predict(self, texts: Sequence[str]) -> list[list[frozenset]]:
        x = self.features.transform(texts)
        cols = [_decode(m.logits(x), m.scheme, m.activation) for m in self.members]
        return [[col[i][0] for col in cols] for i in range(x.shape[0])]


# ---------------------------------------------------------------- multitask

@dataclass
class MultitaskModel:
    """Shared ReLU projection (features -> hidden) read by one affine head per task."""

    scheme: LabelScheme
    features: FeatureExtractor
    columns: np.ndarray
    projection: np.ndarray  # (n_columns, hidden)
    hidden_bias: np.ndarray  # (hidden,)
    head_weights: np.ndarray  # (C, hidden, L)
    head_bias: np.ndarray  # (C, L)
    seed: int = 0
    loss_history: list = field(default_factory=list)

    kind = "multitask"

    @property
    def activation(self) -> str:
        return SIGMOID if self.scheme.multilabel else SOFTMAX

    @property
    def n_outputs(self) -> int:
        return self.head_weights.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.projection.shape[1]

    def _forward(self, xc, projection):
        pre = np.asarray(xc @ projection) + self.hidden_bias
        hidden = np.maximum(pre, 0.0)
        z = np.einsum("bh,chl->bcl", hidden, self.head_weights) + self.head_bias
        return pre, hidden, z

    def _backward(self, xc, pre, hidden, dz):
        d_head_w = np.einsum("bh,bcl->chl", hidden, dz)
        d_head_b = dz.sum(axis=0)
        d_pre = np.einsum("bcl,chl->bh", dz, self.head_weights) * (pre > 0)
        return np.asarray(xc.T @ d_pre), d_pre.sum(axis=0), d_head_w, d_head_b

    def loss_and_gradients(self, xc: sp.csr_matrix, targets: np.ndarray, mask: np.ndarray):
        """Batch loss and dense gradients; ``xc`` is already in the model's column space."""
        pre, hidden, z = self._forward(xc, self.projection)
        loss, dz = _head_loss(z, targets, mask, self.activation)
        d_proj, d_hb, d_hw, d_b = self._backward(xc, pre, hidden, dz)
        return loss, {"projection": d_proj, "hidden_bias": d_hb, "head_weights": d_hw, "head_bias": d_b}

    def _fit(self, xc, targets, mask, config: TrainConfig, rng):
        n = xc.shape[0]
        for epoch in range(config.epochs):
            lr = config.learning_rate * config.lr_decay**epoch
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                cols, xb = _compact_batch(xc[idx])
                proj = self.projection[cols]
                pre, hidden, z = self._forward(xb, proj)
                _, dz = _head_loss(z, targets[idx], mask[idx], self.activation)
                d_proj, d_hb, d_hw, d_b = self._backward(xb, pre, hidden, dz)
                self.projection[cols] = proj - lr * d_proj
                self.hidden_bias -= lr * d_hb
                self.head_weights -= lr * d_hw
                self.head_bias -= lr * d_b
            self.loss_history.append(self.loss_and_gradients(xc, targets, mask)[0])

    def logits(self, x: sp.csr_matrix) -> np.ndarray:
        return self._forward(_project_columns(x, self.columns), self.projection)[2]

    def predict(self, texts: Sequence[str]) -> list[list[frozenset]]:
        return _decode(self.logits(self.features.transform(texts)), self.scheme, self.activation)


# ---------------------------------------------------------------- training entry points

def _featurize(texts: Sequence[str], extractor: FeatureExtractor):
    x = extractor.transform(texts)
    columns = np.unique(x.indices).astype(np.int64)
    return columns, _project_columns(x, columns)


def _new_linear(cls, scheme, extractor, n_blocks, activation, columns, seed):
    width = n_blocks * len(scheme.labels)
    return cls(scheme, extractor, n_blocks, activation, columns,
               np.zeros((len(columns), width)), np.zeros(width), seed)


def train_single(
    examples: Sequence[tuple[str, frozenset]],
    scheme: LabelScheme,
    config: TrainConfig = TrainConfig(),
    extractor: FeatureExtractor | None = None,
    stream: int = 0,
) -> SingleTaskModel:
    """Fit one classifier to (text, label set) pairs."""
    if not examples:
        raise InvalidInputError("cannot train on an empty dataset")
    extractor = extractor or FeatureExtractor()
    texts = [t for t, _ in examples]
    targets, mask = encode_targets([(labels,) for _, labels in examples], scheme)
    _check_label_support(targets, mask, scheme, "single-task model")
    columns, xc = _featurize(texts, extractor)
    activation = SIGMOID if scheme.multilabel else SOFTMAX
    model = _new_linear(SingleTaskModel, scheme, extractor, 1, activation, columns, config.seed)
    model._fit(xc, targets, mask, config, _rng(config.seed, stream))
    return model


def _clustered_inputs(clustered: ClusteredDataset, texts: Sequence[str]):
    if len(texts) != len(clustered.instances):
        raise ShapeError(f"{len(texts)} texts for {len(clustered.instances)} instances")
    if not clustered.instances:
        raise InvalidInputError("cannot train on an empty dataset")


def train_ensemble(
    clustered: ClusteredDataset,
    texts: Sequence[str],
    scheme: LabelScheme,
    config: TrainConfig = TrainConfig(),
    extractor: FeatureExtractor | None = None,
) -> EnsembleModel:
    """One single-task model per cluster, trained only where that cluster has a label."""
    _clustered_inputs(clustered, texts)
    for c in range(clustered.n_clusters):
        if all(labels is None for labels in clustered.column(c)):
            raise ConfigError(f"cluster {c} has no training labels")
    extractor = extractor or FeatureExtractor()
    members = []
    for c in range(clustered.n_clusters):
        examples = [(t, lab) for t, lab in zip(texts, clustered.column(c)) if lab is not None]
        members.append(train_single(examples, scheme, config, extractor, stream=c))
    return EnsembleModel(members)


def train_multilabel_head(
    clustered: ClusteredDataset,
    texts: Sequence[str],
    scheme: LabelScheme,
    config: TrainConfig = TrainConfig(),
    extractor: FeatureExtractor | None = None,
) -> MultiLabelHeadModel:
    """Joint model with C blocks of independent logistic outputs; missing cluster labels are masked."""
    _clustered_inputs(clustered, texts)
    extractor = extractor or FeatureExtractor()
    targets, mask = encode_targets(clustered.cluster_labels, scheme)
    _check_label_support(targets, mask, scheme, "multi-label head")
    columns, xc = _featurize(texts, extractor)
    model = _new_linear(MultiLabelHeadModel, scheme, extractor, clustered.n_clusters, SIGMOID,
                        columns, config.seed)
    model._fit(xc, targets, mask, config, _rng(config.seed, 0))
    return model


def init_multitask(
    scheme: LabelScheme,
    extractor: FeatureExtractor,
    columns: np.ndarray,
    n_tasks: int,
    hidden_dim: int,
    rng: np.random.Generator,
    seed: int = 0,
) -> MultitaskModel:
    n_labels = len(scheme.labels)
    return MultitaskModel(
        scheme=scheme,
        features=extractor,
        columns=columns,
        projection=rng.normal(0.0, PROJECTION_INIT_SCALE, size=(len(columns), hidden_dim)),
        hidden_bias=np.zeros(hidden_dim),
        head_weights=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(n_tasks, hidden_dim, n_labels)),
        head_bias=np.zeros((n_tasks, n_labels)),
        seed=seed,
    )


def train_multitask(
    clustered: ClusteredDataset,
    texts: Sequence[str],
    scheme: LabelScheme,
    config: TrainConfig = TrainConfig(),
    extractor: FeatureExtractor | None = None,
) -> MultitaskModel:
    """Shared projection plus one head per cluster, trained on the summed masked per-task losses."""
    _clustered_inputs(clustered, texts)
    extractor = extractor or FeatureExtractor()
    targets, mask = encode_targets(clustered.cluster_labels, scheme)
    _check_label_support(targets, mask, scheme, "multitask model")
    columns, xc = _featurize(texts, extractor)
    rng = _rng(config.seed, 0)
    model = init_multitask(scheme, extractor, columns, clustered.n_clusters, config.hidden_dim, rng, config.seed)
    model._fit(xc, targets, mask, config, rng)
    return model


def predict(model, texts: Sequence[str], scheme: LabelScheme, n_clusters: int | None = None):
    """Label-set grid of shape (instances x outputs); single-task models have one output."""
    if model.scheme != scheme:
        raise ShapeError("model was trained with a different label scheme")
    if n_clusters is not None and model.kind != "single" and model.n_outputs != n_clusters:
        raise ShapeError(f"model has {model.n_outputs} outputs, expected {n_clusters}")
    return model.predict(texts)


# ---------------------------------------------------------------- serialization

def _arrays(model, prefix: str = "") -> dict:
    if isinstance(model, MultitaskModel):
        names = ("columns", "projection", "hidden_bias", "head_weights", "head_bias")
    else:
        names = ("columns", "weights", "bias")
    return {prefix + n: getattr(model, n) for n in names}


def save_model(model, path: str | Path, extra: dict | None = None) -> None:
    """Write a model as an .npz container with versioned JSON metadata."""
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "scheme": model.scheme.to_dict(),
        "n_outputs": model.n_outputs,
        "features": model.features.to_dict(),
    }
    arrays = {}
    if isinstance(model, EnsembleModel):
        meta["members"] = [{"seed": m.seed, "loss_history": m.loss_history} for m in model.members]
        for c, m in enumerate(model.members):
            arrays.update(_arrays(m, f"m{c}_"))
    else:
        meta["seed"] = model.seed
        meta["loss_history"] = model.loss_history
        if not isinstance(model, MultitaskModel):
            meta["activation"] = model.activation
            meta["n_blocks"] = model.n_blocks
        arrays.update(_arrays(model))
    if extra:
        meta["extra"] = extra
    with Path(path).open("wb") as handle:
        np.savez(handle, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_model(path: str | Path):
    with np.load(Path(path), allow_pickle=False) as data:
        try:
            meta = json.loads(str(data["meta"]))
        except KeyError:
            raise ModelFormatError(f"{path} is not a model container") from None
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"model format version {version} != supported {FORMAT_VERSION}")
        scheme = LabelScheme.from_dict(meta["scheme"])
        extractor = FeatureExtractor.from_dict(meta["features"])
        kind = meta["kind"]
        if kind == "ensemble":
            members = []
            for c, info in enumerate(meta["members"]):
                members.append(SingleTaskModel(
                    scheme, extractor, 1, SIGMOID if scheme.multilabel else SOFTMAX,
                    data[f"m{c}_columns"], data[f"m{c}_weights"], data[f"m{c}_bias"],
                    info["seed"], list(info["loss_history"]),
                ))
            return EnsembleModel(members)
        if kind == "multitask":
            return MultitaskModel(
                scheme, extractor, data["columns"], data["projection"], data["hidden_bias"],
                data["head_weights"], data["head_bias"], meta["seed"], list(meta["loss_history"]),
            )
        cls = {"single": SingleTaskModel, "multilabel": MultiLabelHeadModel}.get(kind)
        if cls is None:
            raise ModelFormatError(f"unknown model kind {kind!r}")
        return cls(scheme, extractor, meta["n_blocks"], meta["activation"], data["columns"],
                   data["weights"], data["bias"], meta["seed"], list(meta["loss_history"]))
