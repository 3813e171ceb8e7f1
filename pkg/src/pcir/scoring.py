"""Anomaly scoring rules under one sign convention: higher = more anomalous.

* k-nearest-neighbor: mean Euclidean distance from a query representation
  to its k nearest training representations (exact full scan).
* reconstruction: squared distance between a sample and its
  reconstruction through the autoencoder.
* cosine-norm: max cosine similarity against the references times the
  query norm is a normality score; it is negated to fit the convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError
from .datagen import Dataset
from .ioutil import atomic_write_text
from .models import FitResult

SCORER_KINDS = ("knn", "reconstruction", "cosine-norm")


@dataclass
class ScorerConfig:
    kind: str = "knn"
    k: int = 2
    refs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.kind in ("knn", "cosine-norm") and self.refs is not None:
            refs = np.asarray(self.refs, dtype=np.float64)
            if refs.ndim != 2 or refs.shape[0] == 0:
                raise ValueError("reference set must be a non-empty matrix")
            self.refs = refs


def knn_score(refs: np.ndarray, z: np.ndarray, k: int) -> float:
    """Mean Euclidean distance from z to its k nearest references."""
    refs = np.asarray(refs, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64).ravel()
    if refs.ndim != 2 or refs.shape[1] != z.shape[0]:
        raise ShapeError(f"references {refs.shape} vs query {z.shape}")
    if not 1 <= k <= refs.shape[0]:
        raise ValueError(f"k={k} outside [1, {refs.shape[0]}]")
    d = np.sqrt(np.sum((refs - z) ** 2, axis=1))
    nearest = np.partition(d, k - 1)[:k]
    return float(nearest.mean())


def reconstruction_score(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Squared Euclidean distance between a vector and its reconstruction."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return float(np.sum((x - x_hat) ** 2))


def cosine_norm_score(refs: np.ndarray, z: np.ndarray) -> float:
    """Negated (max cosine similarity to a reference) * ||z||.

    A zero query has no direction and scores 0 by convention.
    """
    refs = np.asarray(refs, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64).ravel()
    if refs.ndim != 2 or refs.shape[0] == 0:
        raise ValueError("reference set must be a non-empty matrix")
    if refs.shape[1] != z.shape[0]:
        raise ShapeError(f"references {refs.shape} vs query {z.shape}")
    norm_z = float(np.sqrt(np.sum(z ** 2)))
    if norm_z == 0.0:
        return 0.0
    ref_norms = np.sqrt(np.sum(refs ** 2, axis=1))
    sims = np.where(ref_norms > 0.0, refs @ z / np.maximum(ref_norms * norm_z, 1e-300), 0.0)
    return float(-(sims.max() * norm_z))


def score_dataset(model: FitResult, scorer: ScorerConfig, dataset: Dataset) -> np.ndarray:
    """Scores aligned with the dataset's row order (labels pass through)."""
    if scorer.kind == "knn":
        if scorer.refs is None:
            raise ValueError("knn scoring needs a reference set")
        z = model.encode(dataset.features)
        return np.array([knn_score(scorer.refs, z[i], scorer.k) for i in range(len(z))])
    if scorer.kind == "cosine-norm":
        if scorer.refs is None:
            raise ValueError("cosine-norm scoring needs a reference set")
        z = model.encode(dataset.features)
        return np.array([cosine_norm_score(scorer.refs, z[i]) for i in range(len(z))])
    if model.decoder is None:
        raise ValueError("reconstruction scoring needs an autoencoder detector")
    x_hat = model.reconstruct(dataset.features)
    return np.array([reconstruction_score(dataset.features[i], x_hat[i])
                     for i in range(dataset.n)])


def scores_to_csv(scores: np.ndarray, dataset: Dataset) -> str:
    lines = ["index,score,label,env"]
    for i, s in enumerate(scores):
        lines.append(f"{i},{format(float(s), '.17g')},{int(dataset.labels[i])},{dataset.env[i]}")
    return "\n".join(lines) + "\n"


def write_scores(scores: np.ndarray, dataset: Dataset, path) -> None:
    atomic_write_text(path, scores_to_csv(scores, dataset))
