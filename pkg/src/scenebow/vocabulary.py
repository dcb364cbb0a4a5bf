"""Visual vocabularies: k-means clustering of 128-D descriptors and
nearest-word quantization.

Four vocabulary constructions are supported: a single clustering of all
training descriptors (universal), per-category clusterings concatenated in
a fixed category order (integrated), and upper/lower-half restrictions of
either, where a keypoint's half comes from the grid region containing its
center.
"""

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyCategory, TooFewPoints
from .grid import LOWER, UPPER, regions_of_points
from .rng import derive_seed

UNIVERSAL = "Universal"
INTEGRATED = "Integrated"

DEFAULT_K = 200
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-4

_KIND_RE = re.compile(r"^(Universal|Integrated)(?:Half\((Upper|Lower)\))?$")


@dataclass
class KMeansResult:
    """Centroids, point assignments, and the per-iteration sum of squared
    distances (non-increasing)."""

    centroids: np.ndarray
    assignments: np.ndarray
    objective: list[float]


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> KMeansResult:
    """Lloyd iterations from a k-means++ seeded start, squared Euclidean
    objective. Stops when assignments are stable, the relative objective
    improvement drops below tol, or max_iter is reached. A cluster left
    empty is re-seeded to the point farthest from its centroid."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"expected a 2-D point matrix, got shape {points.shape}")
    n = len(points)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise TooFewPoints(n, k)

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(points, k, rng)
    sq_norms = (points**2).sum(axis=1)

    objective: list[float] = []
    assignments = None
    for _ in range(max_iter):
        d2 = _sq_distances(points, centroids, sq_norms)
        new_assignments = np.argmin(d2, axis=1)

        empties = np.setdiff1d(np.arange(k), new_assignments, assume_unique=True)
        if len(empties) > 0:
            taken: set[int] = set()
            for c in empties:
                order = np.argsort(-d2[:, c])
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                centroids[c] = points[pick]
                new_assignments[pick] = c
            d2 = _sq_distances(points, centroids, sq_norms)
            new_assignments = np.argmin(d2, axis=1)

        obj = float(((points - centroids[new_assignments]) ** 2).sum())
        if objective and obj > objective[-1]:
            break  # floating-point noise floor; keep the previous state
        stable = assignments is not None and np.array_equal(new_assignments, assignments)
        converged = bool(objective) and (objective[-1] - obj) < tol * objective[-1]
        assignments = new_assignments
        objective.append(obj)

        next_centroids = np.zeros_like(centroids)
        np.add.at(next_centroids, assignments, points)
        counts = np.bincount(assignments, minlength=k)
        still_empty = counts == 0
        next_centroids /= np.maximum(counts, 1)[:, None]
        next_centroids[still_empty] = centroids[still_empty]
        centroids = next_centroids

        if stable or converged:
            break

    return KMeansResult(centroids, assignments, objective)


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[c:] = points[rng.integers(n, size=k - c)]
            break
        centroids[c] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centroids[c]) ** 2).sum(axis=1))
    return centroids


def _sq_distances(points, centroids, sq_norms=None) -> np.ndarray:
    """(n, k) squared Euclidean distances, clipped at zero."""
    if sq_norms is None:
        sq_norms = (points**2).sum(axis=1)
    d2 = (
        sq_norms[:, None]
        - 2.0 * (points @ centroids.T)
        + (centroids**2).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0, out=d2)


@dataclass
class Vocabulary:
    """Ordered visual words (one 128-D centroid per row). Integrated kinds
    carry a per-word provenance category: words [c*K, (c+1)*K) belong to
    category index c in the recorded category order."""

    words: np.ndarray
    kind: str
    half: str | None = None
    k_per_block: int = DEFAULT_K
    categories: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.float32)
        if not np.isfinite(self.words).all():
            raise DataError("vocabulary contains non-finite words")
        if self.kind not in (UNIVERSAL, INTEGRATED):
            raise ValueError(f"unknown vocabulary kind {self.kind!r}")
        if self.half not in (None, UPPER, LOWER):
            raise ValueError(f"unknown half {self.half!r}")
        if self.kind == INTEGRATED:
            expected = self.k_per_block * len(self.categories)
            if len(self.words) != expected:
                raise DataError(
                    f"integrated vocabulary has {len(self.words)} words, "
                    f"expected {expected}"
                )

    @property
    def size(self) -> int:
        return len(self.words)

    @property
    def kind_name(self) -> str:
        if self.half is None:
            return self.kind
        return f"{self.kind}Half({self.half.capitalize()})"

    def provenance_of(self, word_index: int) -> int:
        """Category index of a word; -1 for universal kinds."""
        if self.kind != INTEGRATED:
            return -1
        return int(word_index) // self.k_per_block

    @property
    def provenance(self) -> np.ndarray:
        return np.arange(self.size) // self.k_per_block if self.kind == INTEGRATED \
            else np.full(self.size, -1)

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        h.update(self.kind_name.encode())
        h.update(",".join(self.categories).encode())
        h.update(np.ascontiguousarray(self.words, dtype="<f4").tobytes())
        return h.hexdigest()


def build_universal(descriptors: np.ndarray, k: int = DEFAULT_K, seed: int = 0,
                    max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> Vocabulary:
    """One k-means over the pooled training descriptors."""
    result = kmeans(descriptors, k, seed=seed, max_iter=max_iter, tol=tol)
    return Vocabulary(result.centroids, UNIVERSAL, k_per_block=k)


def build_integrated(
    per_category: dict[str, np.ndarray],
    k: int = DEFAULT_K,
    seed: int = 0,
    categories: tuple[str, ...] | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> Vocabulary:
    """Independent K-word clusterings per category, concatenated in the
    given (default lexicographic) category order."""
    if categories is None:
        categories = tuple(sorted(per_category))
    blocks = []
    for name in categories:
        descs = np.asarray(per_category.get(name, np.empty((0, 128))))
        if len(descs) == 0:
            raise EmptyCategory(f"category {name!r} has no descriptors")
        result = kmeans(descs, k, seed=derive_seed(seed, "integrated", name),
                        max_iter=max_iter, tol=tol)
        blocks.append(result.centroids)
    return Vocabulary(np.vstack(blocks), INTEGRATED, k_per_block=k, categories=tuple(categories))


def split_descriptors_by_half(width: int, height: int, keypoints: np.ndarray,
                              descriptors: np.ndarray) -> dict[str, np.ndarray]:
    """Partition one image's descriptors by the grid half containing each
    keypoint center."""
    if len(keypoints) == 0:
        empty = np.empty((0, descriptors.shape[1] if descriptors.ndim == 2 else 128))
        return {UPPER: empty, LOWER: empty.copy()}
    regions = regions_of_points(keypoints[:, 0], keypoints[:, 1], width, height)
    upper_mask = regions < 50
    return {UPPER: descriptors[upper_mask], LOWER: descriptors[~upper_mask]}


def build_half_vocabularies(
    images,
    half: str,
    mode: str,
    k: int = DEFAULT_K,
    seed: int = 0,
    categories: tuple[str, ...] | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> Vocabulary:
    """Vocabulary restricted to one half of every training image.

    `images` yields (category, width, height, keypoints, descriptors) per
    image; `half` is "upper" or "lower"; `mode` Universal or Integrated.
    """
    if half not in (UPPER, LOWER):
        raise ValueError(f"half must be {UPPER!r} or {LOWER!r}, got {half!r}")
    pooled: dict[str, list[np.ndarray]] = {}
    for category, width, height, kps, descs in images:
        part = split_descriptors_by_half(width, height, kps, descs)[half]
        if len(part):
            pooled.setdefault(category, []).append(part)
    stacked = {c: np.vstack(parts) for c, parts in pooled.items()}

    if mode == UNIVERSAL:
        all_descs = (
            np.vstack(list(stacked.values())) if stacked else np.empty((0, 128))
        )
        if len(all_descs) < k:
            raise TooFewPoints(len(all_descs), k)
        result = kmeans(all_descs, k, seed=derive_seed(seed, "half", half),
                        max_iter=max_iter, tol=tol)
        return Vocabulary(result.centroids, UNIVERSAL, half=half, k_per_block=k)
    if mode == INTEGRATED:
        if categories is None:
            categories = tuple(sorted(stacked))
        blocks = []
        for name in categories:
            descs = stacked.get(name)
            if descs is None or len(descs) == 0:
                raise EmptyCategory(f"category {name!r} has no {half}-half descriptors")
            result = kmeans(descs, k, seed=derive_seed(seed, "half", half, name),
                            max_iter=max_iter, tol=tol)
            blocks.append(result.centroids)
        return Vocabulary(np.vstack(blocks), INTEGRATED, half=half,
                          k_per_block=k, categories=tuple(categories))
    raise ValueError(f"mode must be {UNIVERSAL!r} or {INTEGRATED!r}, got {mode!r}")


def quantize(descriptor: np.ndarray, vocabulary: Vocabulary) -> int:
    """Index of the nearest word by squared Euclidean distance; ties go to
    the lowest index."""
    d = np.asarray(descriptor, dtype=np.float64)
    if d.shape != (vocabulary.words.shape[1],):
        raise ValueError(f"descriptor shape {d.shape} does not match vocabulary")
    d2 = ((vocabulary.words.astype(np.float64) - d) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def quantize_batch(descriptors: np.ndarray, vocabulary: Vocabulary,
                   chunk: int = 8192) -> np.ndarray:
    """Vectorized nearest-word indices for an (n, 128) descriptor matrix."""
    descriptors = np.asarray(descriptors, dtype=np.float64)
    words = vocabulary.words.astype(np.float64)
    out = np.empty(len(descriptors), dtype=np.int64)
    for lo in range(0, len(descriptors), chunk):
        hi = min(lo + chunk, len(descriptors))
        out[lo:hi] = np.argmin(_sq_distances(descriptors[lo:hi], words), axis=1)
    return out


# -- vocabulary files ----------------------------------------------------------


def write_vocabulary(path, vocabulary: Vocabulary) -> None:
    """CSV: "#kind=", "#K=", "#categories=" header rows, then one row per
    word: index, provenance category (or "-"), 128 floats at 9 significant
    digits (lossless for float32 words)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#kind={vocabulary.kind_name}\n")
        fh.write(f"#K={vocabulary.k_per_block}\n")
        fh.write(f"#categories={','.join(vocabulary.categories)}\n")
        for i, word in enumerate(vocabulary.words):
            prov = (
                vocabulary.categories[vocabulary.provenance_of(i)]
                if vocabulary.kind == INTEGRATED
                else "-"
            )
            floats = ",".join(f"{v:.9g}" for v in word)
            fh.write(f"{i},{prov},{floats}\n")


def read_vocabulary(path) -> Vocabulary:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = {}
    rows = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, value = ln[1:].partition("=")
            header[key] = value
        else:
            rows.append(ln)
    for key in ("kind", "K", "categories"):
        if key not in header:
            raise DataError(f"{path}: missing #{key}= header")
    m = _KIND_RE.match(header["kind"])
    if not m:
        raise DataError(f"{path}: unknown vocabulary kind {header['kind']!r}")
    kind = m.group(1)
    half = m.group(2).lower() if m.group(2) else None
    k = int(header["K"])
    categories = tuple(c for c in header["categories"].split(",") if c)

    words = np.empty((len(rows), 128), dtype=np.float32)
    for n, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != 2 + 128:
            raise DataError(f"{path}: row {n} has {len(parts)} fields, expected 130")
        if int(parts[0]) != n:
            raise DataError(f"{path}: row {n} has index {parts[0]}")
        words[n] = [float(v) for v in parts[1 + 1 :]]
        expected_prov = categories[n // k] if kind == INTEGRATED else "-"
        if parts[1] != expected_prov:
            raise DataError(f"{path}: row {n} provenance {parts[1]!r} != {expected_prov!r}")
    return Vocabulary(words, kind, half=half, k_per_block=k, categories=categories)
