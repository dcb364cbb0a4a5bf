"""Region annotators: semantic-prototype nearest neighbor and HIK SVM.

The prototype annotator averages training features per concept and labels a
region with the concept of the Euclidean-nearest prototype (K=1). Distances
use raw, unnormalized vectors for parity with prototype construction. The
SVM annotator lives in `svm` and is re-exported here.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyConcept
from .svm import (  # noqa: F401 - one import point for both annotators
    DEFAULT_C_GRID,
    SvmModel,
    hik,
    hik_gram,
    select_C,
    svm_predict,
    svm_predict_batch,
    svm_train,
)


@dataclass
class SemanticPrototype:
    """Coordinate-wise mean of one concept's training features."""

    concept: int
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)


def build_prototypes(features: np.ndarray, labels: np.ndarray) -> list[SemanticPrototype]:
    """One prototype per concept present in the training labels, sorted by
    concept index. Means are coordinate-wise; for concatenated features this
    equals concatenating per-part means."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise EmptyConcept("no training samples")
    return [
        SemanticPrototype(int(c), features[labels == c].mean(axis=0))
        for c in np.unique(labels)
    ]


def prototype_matrix(prototypes: list[SemanticPrototype]) -> tuple[np.ndarray, np.ndarray]:
    concepts = np.array([p.concept for p in prototypes], dtype=np.int64)
    order = np.argsort(concepts, kind="stable")
    vectors = np.stack([prototypes[i].vector for i in order])
    return concepts[order], vectors


def knn_annotate_batch(features: np.ndarray, prototypes: list[SemanticPrototype]) -> np.ndarray:
    """Concept of the Euclidean-nearest prototype per row; exact distances,
    ties resolved to the lowest concept index."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    concepts, vectors = prototype_matrix(prototypes)
    if features.shape[1] != vectors.shape[1]:
        raise DimensionMismatch(
            f"feature width {features.shape[1]} vs prototype {vectors.shape[1]}"
        )
    out = np.empty(len(features), dtype=np.int64)
    chunk = max(1, 2**22 // max(vectors.size, 1))
    for lo in range(0, len(features), chunk):
        hi = min(lo + chunk, len(features))
        d2 = ((features[lo:hi, None, :] - vectors[None, :, :]) ** 2).sum(axis=2)
        out[lo:hi] = concepts[np.argmin(d2, axis=1)]
    return out


def knn_annotate(feature, prototypes: list[SemanticPrototype]) -> int:
    feature = np.asarray(getattr(feature, "values", feature), dtype=np.float64)
    return int(knn_annotate_batch(feature[None, :], prototypes)[0])
