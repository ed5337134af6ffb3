"""Reference classifiers: cosine kNN over embeddings and a linear bag-of-words.

Both break prediction ties toward the lower level, matching the prototype
head.  The bag-of-words model is a one-vs-rest linear classifier trained with
hinge loss and L2 regularization by plain seeded subgradient descent; it
counts lemmas of all tokens, not only content words.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import Dataset, DatasetError, NUM_LEVELS, TokenAnnotation
from .training import LossWeights

__all__ = [
    "KnnIndex",
    "knn_votes",
    "knn_predict",
    "knn_predict_dataset",
    "SparseCounts",
    "build_vocabulary",
    "bow_featurize",
    "BowModel",
    "bow_train",
    "bow_predict",
    "bow_predict_dataset",
]

DEFAULT_K = 6


@dataclass(frozen=True)
class KnnIndex:
    """Frozen store of training vectors, their gold label sets, and k."""

    vectors: np.ndarray
    labels: tuple[frozenset[int], ...]
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] == 0:
            raise ValueError("index requires a nonempty n x d matrix")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("index vectors must be finite")
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(norms <= 1e-12):
            raise ValueError("index vectors must have positive norm")
        if len(self.labels) != vecs.shape[0]:
            raise ValueError("one label set per vector required")
        if not 1 <= self.k <= vecs.shape[0]:
            raise ValueError("k must satisfy 1 <= k <= n")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(
            self, "labels", tuple(frozenset(int(g) for g in s) for s in self.labels)
        )

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @classmethod
    def from_dataset(cls, data: Dataset, k: int = DEFAULT_K) -> "KnnIndex":
        data.require_embeddings()
        labels = tuple(
            frozenset(int(lvl) for lvl in s.labels) for s in data.sentences
        )
        return cls(vectors=data.embedding_matrix(), labels=labels, k=k)


def _cosine_distances(x: np.ndarray, index: KnnIndex) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (index.dim,):
        raise ValueError(f"query must have dimension {index.dim}")
    x_norm = np.linalg.norm(x)
    if x_norm <= 1e-12:
        raise ValueError("query vector has zero norm")
    sims = (index.vectors @ x) / (np.linalg.norm(index.vectors, axis=1) * x_norm)
    return 1.0 - sims


def knn_votes(
    x: np.ndarray,
    index: KnnIndex,
    k: int | None = None,
    num_levels: int = NUM_LEVELS,
    distance_weighted: bool = False,
) -> np.ndarray:
    """Per-level vote totals from the k nearest training points.

    A two-label neighbor casts one vote for each of its labels.  Distance
    ties at the k-th boundary keep the lower insertion index (stable sort).
    ``distance_weighted`` scales each vote by 1/distance instead of 1 (off
    by default).
    """
    k = index.k if k is None else k
    if not 1 <= k <= index.size:
        raise ValueError("k must satisfy 1 <= k <= n")
    dists = _cosine_distances(x, index)
    nearest = np.argsort(dists, kind="stable")[:k]
    votes = np.zeros(num_levels)
    for i in nearest:
        vote = 1.0 / max(dists[i], 1e-12) if distance_weighted else 1.0
        for level in index.labels[i]:
            votes[level] += vote
    return votes


def knn_predict(
    x: np.ndarray,
    index: KnnIndex,
    k: int | None = None,
    num_levels: int = NUM_LEVELS,
    distance_weighted: bool = False,
) -> int:
    """Majority vote by cosine distance; vote ties resolve to the lower level."""
    return int(np.argmax(knn_votes(x, index, k, num_levels, distance_weighted)))


def knn_predict_dataset(
    index: KnnIndex,
    data: Dataset,
    k: int | None = None,
    num_levels: int = NUM_LEVELS,
    distance_weighted: bool = False,
) -> np.ndarray:
    data.require_embeddings()
    xs = data.embedding_matrix()
    return np.array(
        [knn_predict(x, index, k, num_levels, distance_weighted) for x in xs],
        dtype=np.int64,
    )


@dataclass(frozen=True)
class SparseCounts:
    """Sparse nonnegative count vector with strictly increasing indices."""

    indices: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        cnt = np.asarray(self.counts, dtype=np.float64)
        if idx.ndim != 1 or cnt.ndim != 1 or idx.shape != cnt.shape:
            raise ValueError("indices and counts must be equal-length vectors")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("indices must be strictly increasing and nonnegative")
        if np.any(cnt <= 0):
            raise ValueError("counts must be positive")
        idx.setflags(write=False)
        cnt.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "counts", cnt)

    def dense(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.indices] = self.counts
        return out


def build_vocabulary(train: Dataset) -> dict[str, int]:
    """Sorted lemma vocabulary over the training split; all tokens count."""
    lemmas: set[str] = set()
    for sentence in train.sentences:
        tokens = train.annotations.get(sentence.id)
        if tokens is None:
            raise DatasetError(
                f"sentence {sentence.id!r} has no token annotations; "
                f"bag-of-words features require them"
            )
        lemmas.update(tok.lemma for tok in tokens)
    return {lemma: i for i, lemma in enumerate(sorted(lemmas))}


def bow_featurize(
    tokens: Sequence[TokenAnnotation], vocab: dict[str, int]
) -> SparseCounts:
    """Lemma counts restricted to the vocabulary; unknown lemmas dropped."""
    tally: dict[int, float] = {}
    for tok in tokens:
        col = vocab.get(tok.lemma)
        if col is not None:
            tally[col] = tally.get(col, 0.0) + 1.0
    cols = sorted(tally)
    return SparseCounts(
        indices=np.array(cols, dtype=np.int64),
        counts=np.array([tally[c] for c in cols], dtype=np.float64),
    )


@dataclass(frozen=True)
class BowModel:
    vocabulary: dict[str, int]
    weights: np.ndarray
    bias: np.ndarray
    gamma: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cols = sorted(self.vocabulary.values())
        if cols != list(range(len(cols))):
            raise ValueError("vocabulary columns must be contiguous 0..V-1")
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != len(cols):
            raise ValueError("weight matrix must be J x V")
        if b.shape != (w.shape[0],):
            raise ValueError("bias must have one entry per level")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_levels(self) -> int:
        return int(self.weights.shape[0])

    def decision_values(self, features: SparseCounts) -> np.ndarray:
        return self.weights[:, features.indices] @ features.counts + self.bias


def bow_train(
    train: Dataset,
    gamma: float,
    weights: LossWeights | None = None,
    *,
    seed: int = 0,
    epochs: int = 40,
    learning_rate: float = 0.05,
    num_levels: int = NUM_LEVELS,
) -> BowModel:
    """One-vs-rest hinge + L2 by seeded per-sample subgradient descent.

    Each sample's hinge terms are scaled by the loss weight of its higher
    gold label (uniform when ``weights`` is None).  Deterministic for a
    fixed seed.  Raises on a training set with fewer than two distinct
    levels, where one-vs-rest decision values are vacuous.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not train.sentences:
        raise ValueError("empty training set")
    vocab = build_vocabulary(train)
    feats = [
        bow_featurize(train.annotations[s.id], vocab) for s in train.sentences
    ]
    golds = [frozenset(int(lvl) for lvl in s.labels) for s in train.sentences]
    distinct = {lvl for g in golds for lvl in g}
    if len(distinct) < 2:
        raise ValueError(
            "training set contains a single distinct level; "
            "one-vs-rest training is degenerate"
        )
    sample_weight = np.ones(len(golds))
    if weights is not None:
        sample_weight = np.array([weights[max(g)] for g in golds])

    w = np.zeros((num_levels, len(vocab)))
    b = np.zeros(num_levels)
    signs = np.full((len(golds), num_levels), -1.0)
    for i, g in enumerate(golds):
        for lvl in g:
            signs[i, lvl] = 1.0

    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        for i in rng.permutation(len(golds)):
            f = feats[i]
            scores = w[:, f.indices] @ f.counts + b
            # decoupled shrink implements the L2 subgradient for every row
            w *= 1.0 - learning_rate * gamma
            violating = signs[i] * scores < 1.0
            step = learning_rate * sample_weight[i] * signs[i] * violating
            if f.indices.size:
                w[:, f.indices] += np.outer(step, f.counts)
            b += step

    return BowModel(
        vocabulary=vocab,
        weights=w,
        bias=b,
        gamma=gamma,
        metadata={
            "seed": seed,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "weighted": weights is not None,
        },
    )


def bow_predict(features: SparseCounts, model: BowModel) -> int:
    """Argmax of the decision values; exact ties go to the lower level."""
    return int(np.argmax(model.decision_values(features)))


def bow_predict_dataset(model: BowModel, data: Dataset) -> np.ndarray:
    preds = []
    for sentence in data.sentences:
        tokens = data.annotations.get(sentence.id)
        if tokens is None:
            raise DatasetError(
                f"sentence {sentence.id!r} has no token annotations"
            )
        preds.append(bow_predict(bow_featurize(tokens, model.vocabulary), model))
    return np.array(preds, dtype=np.int64)
