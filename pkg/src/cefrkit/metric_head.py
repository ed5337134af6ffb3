"""Prototype-based metric classification head.

Each level owns a block of prototype vectors; a sentence's score for a level
is the mean cosine similarity between its (optionally adapted) embedding and
that level's prototypes, and the level distribution is the softmax of those
scores.  Prototypes are initialized from noisy class means and orthonormalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import Dataset, ZERO_NORM_THRESHOLD, NUM_LEVELS

__all__ = ["PrototypeModel", "init_prototypes"]


@dataclass
class PrototypeModel:
    """Prototype matrix plus an optional linear adapter over the embeddings.

    The prototype matrix has one row per prototype in level-major layout:
    prototype k of level j lives at row ``j * prototypes_per_level + k``.
    The adapter, when present, maps an embedding x to ``adapter @ x`` before
    any similarity is computed; an identity adapter recovers the pure metric
    head.
    """

    num_levels: int
    prototypes_per_level: int
    dim: int
    prototypes: np.ndarray
    adapter: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        rows = self.num_levels * self.prototypes_per_level
        if self.prototypes.shape != (rows, self.dim):
            raise ValueError(
                f"prototype matrix shape {self.prototypes.shape} != "
                f"({rows}, {self.dim})"
            )
        norms = np.linalg.norm(self.prototypes, axis=1)
        if np.any(norms <= ZERO_NORM_THRESHOLD):
            raise ValueError("prototype rows must have positive norm")
        if self.adapter is not None:
            self.adapter = np.asarray(self.adapter, dtype=np.float64)
            if self.adapter.shape != (self.dim, self.dim):
                raise ValueError(
                    f"adapter shape {self.adapter.shape} != ({self.dim}, {self.dim})"
                )

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"input dimension {x.shape[-1]} != model dim {self.dim}")
        return x

    def project(self, x: np.ndarray) -> np.ndarray:
        """Apply the adapter (rows of x are vectors)."""
        x = self._check_dim(x)
        if self.adapter is None:
            return x
        return x @ self.adapter.T

    def level_similarities_batch(self, xs: np.ndarray) -> np.ndarray:
        """Per-level mean cosine similarity for a batch; shape (n, num_levels)."""
        xs = np.atleast_2d(self._check_dim(xs))
        projected = self.project(xs)
        x_norms = np.linalg.norm(projected, axis=1)
        if np.any(x_norms <= ZERO_NORM_THRESHOLD):
            raise ValueError("cannot score a zero-norm (projected) embedding")
        proto_norms = np.linalg.norm(self.prototypes, axis=1)
        cos = (projected @ self.prototypes.T) / np.outer(x_norms, proto_norms)
        per_level = cos.reshape(
            xs.shape[0], self.num_levels, self.prototypes_per_level
        )
        return per_level.mean(axis=2)

    def level_similarity(self, x: np.ndarray, level: int) -> float:
        """Mean cosine similarity between the adapted x and one level's prototypes."""
        if not 0 <= int(level) < self.num_levels:
            raise ValueError(f"level {level} out of range 0..{self.num_levels - 1}")
        return float(self.level_similarities_batch(x)[0, int(level)])

    def level_similarities(self, x: np.ndarray) -> np.ndarray:
        return self.level_similarities_batch(x)[0]

    def level_distribution_batch(self, xs: np.ndarray) -> np.ndarray:
        scores = self.level_similarities_batch(xs)
        return softmax(scores)

    def level_distribution(self, x: np.ndarray) -> np.ndarray:
        """Softmax over the per-level similarities; sums to 1, all entries > 0."""
        return self.level_distribution_batch(x)[0]

    def predict_batch(self, xs: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum, i.e. exact ties break to the lower level
        return np.argmax(self.level_similarities_batch(xs), axis=1)

    def predict(self, x: np.ndarray) -> int:
        """Most likely level index; exact ties break toward the lower level."""
        return int(self.predict_batch(x)[0])


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    shifted = scores - scores.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def _class_means(train: Dataset, num_levels: int) -> np.ndarray:
    train.require_embeddings()
    dim = train.dim
    assert dim is not None
    sums = np.zeros((num_levels, dim))
    counts = np.zeros(num_levels, dtype=np.int64)
    for sent in train.sentences:
        vec = train.embeddings[sent.id].vector
        # a sentence with two gold labels contributes to both level means
        for lvl in sent.labels:
            if int(lvl) >= num_levels:
                raise ValueError(
                    f"sentence {sent.id!r} has level {lvl.name} outside the "
                    f"first {num_levels} levels"
                )
            sums[int(lvl)] += vec
            counts[int(lvl)] += 1
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise ValueError(f"empty level(s) with no embeddings: {empty.tolist()}")
    return sums / counts[:, None]


def _orthonormal_rows(matrix: np.ndarray) -> np.ndarray:
    """Orthonormalize rows via thin QR of the transpose.

    Each output row is sign-fixed to have a positive inner product with its
    original row (a zero inner product keeps the factorization sign).  Raises
    if the rows are linearly dependent (degenerate rank).
    """
    q, r = np.linalg.qr(matrix.T)
    diag = np.abs(np.diag(r))
    tol = max(matrix.shape) * np.finfo(np.float64).eps * max(diag.max(), 1e-300)
    if np.any(diag <= tol):
        raise ValueError(
            "prototype initialization is rank-deficient (identical class "
            "means with zero noise?); cannot orthonormalize"
        )
    rows = q.T
    signs = np.sign(np.einsum("ij,ij->i", rows, matrix))
    signs[signs == 0] = 1.0
    return rows * signs[:, None]


def init_prototypes(
    train: Dataset,
    prototypes_per_level: int,
    noise_fraction: float = 0.05,
    seed: int = 0,
    num_levels: int = NUM_LEVELS,
) -> PrototypeModel:
    """Build the initial prototype model from class-mean embeddings.

    Per level, the class mean is perturbed with per-element Gaussian noise
    whose variance is ``noise_fraction`` times the variance of all elements of
    the class-mean matrix, one noisy copy per prototype; the stacked rows are
    then orthonormalized.  Requires ``prototypes_per_level * num_levels <=
    dim`` and at least one embedding at every level.  Deterministic for a
    fixed seed.
    """
    if prototypes_per_level < 1:
        raise ValueError("prototypes_per_level must be >= 1")
    means = _class_means(train, num_levels)
    dim = means.shape[1]
    rows = num_levels * prototypes_per_level
    if rows > dim:
        raise ValueError(
            f"{prototypes_per_level} prototypes x {num_levels} levels = {rows} "
            f"rows cannot be orthonormalized in dimension {dim} "
            f"(need prototypes_per_level * num_levels <= dim)"
        )
    sigma = float(np.sqrt(noise_fraction * np.var(means)))
    rng = np.random.default_rng(seed)
    noisy = np.repeat(means, prototypes_per_level, axis=0)
    noisy = noisy + rng.normal(0.0, 1.0, size=(rows, dim)) * sigma
    prototypes = _orthonormal_rows(noisy)
    return PrototypeModel(
        num_levels=num_levels,
        prototypes_per_level=prototypes_per_level,
        dim=dim,
        prototypes=prototypes,
        adapter=np.eye(dim),
        metadata={
            "seed": int(seed),
            "noise_fraction": float(noise_fraction),
            "init": "class-means+noise+orthonormalization",
            "prototype_layout": "level-major",
        },
    )
