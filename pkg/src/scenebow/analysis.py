"""Distribution analysis: how labeled regions and detected keypoints spread
over the semantic concepts, within the whole dataset, one scene category, or
one image half, plus the Pearson correlation between the two distributions.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import CacheMiss, ConstantInput, UnknownCategory
from .grid import REGIONS_PER_IMAGE, regions_of_points

ALL = "all"


def _names(concepts) -> list[str]:
    return [getattr(c, "name", c) for c in concepts]


@dataclass
class Distribution:
    """Per-concept counts with percentages over the concept total. `empty`
    flags a scope with no mass (percentages emitted as zeros)."""

    scope: str
    concepts: list[str]
    counts: np.ndarray
    excluded: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def empty(self) -> bool:
        return self.total == 0

    @property
    def percents(self) -> np.ndarray:
        if self.empty:
            return np.zeros(len(self.counts))
        return 100.0 * self.counts / self.total


def parse_scope(scope: str) -> tuple[str, str | None]:
    """"all", "category:<name>", "half:upper" or "half:lower"."""
    if scope == ALL:
        return ALL, None
    kind, _, arg = scope.partition(":")
    if kind in ("category", "half") and arg:
        return kind, arg
    raise ValueError(f"bad scope {scope!r}; use all, category:<name>, half:upper|lower")


def _scope_masks(dataset: Dataset, scope: str):
    """(image mask, region mask) selecting the scope's rows."""
    kind, arg = parse_scope(scope)
    image_ok = np.ones(len(dataset.images), dtype=bool)
    region_ok = np.ones(REGIONS_PER_IMAGE, dtype=bool)
    if kind == "category":
        if arg not in dataset.category_names:
            raise UnknownCategory(f"{arg!r} not in {dataset.category_names}")
        image_ok = np.array(
            [dataset.categories[im.id] == arg for im in dataset.images], dtype=bool
        )
    elif kind == "half":
        if arg not in ("upper", "lower"):
            raise ValueError(f"half must be upper or lower, got {arg!r}")
        region_ok = (
            np.arange(REGIONS_PER_IMAGE) < 50
            if arg == "upper"
            else np.arange(REGIONS_PER_IMAGE) >= 50
        )
    return image_ok, region_ok


def concept_distribution(dataset: Dataset, scope: str = ALL) -> Distribution:
    """Counts of labeled regions per concept within the scope."""
    image_ok, region_ok = _scope_masks(dataset, scope)
    counts = np.zeros(len(dataset.concepts), dtype=np.int64)
    excluded = 0
    for ok, image in zip(image_ok, dataset.images):
        if not ok:
            continue
        labels = image.labels[region_ok]
        counts += np.bincount(labels[labels >= 0], minlength=len(counts))
        excluded += int((labels < 0).sum())
    return Distribution(scope, _names(dataset.concepts), counts, excluded)


def keypoint_distribution(dataset: Dataset, descriptors, scope: str = ALL) -> Distribution:
    """Counts of detected keypoints per concept of the region containing each
    keypoint center, within the scope. Keypoints in EXCLUDED regions are
    tallied separately. `descriptors` maps image id to a record with width,
    height and a keypoint table (the extraction output)."""
    by_id = descriptors if isinstance(descriptors, dict) else {
        rec.image_id: rec for rec in descriptors
    }
    image_ok, region_ok = _scope_masks(dataset, scope)
    counts = np.zeros(len(dataset.concepts), dtype=np.int64)
    excluded = 0
    for ok, image in zip(image_ok, dataset.images):
        if not ok:
            continue
        rec = by_id.get(image.id)
        if rec is None:
            raise CacheMiss(image.id)
        if len(rec.keypoints) == 0:
            continue
        regions = regions_of_points(rec.keypoints[:, 0], rec.keypoints[:, 1],
                                    rec.width, rec.height)
        keep = region_ok[regions]
        labels = image.labels[regions[keep]]
        counts += np.bincount(labels[labels >= 0], minlength=len(counts))
        excluded += int((labels < 0).sum())
    return Distribution(scope, _names(dataset.concepts), counts, excluded)


def correlate(dist_a, dist_b) -> float:
    """Pearson correlation of two equal-length sequences (for Distribution
    inputs, of their percentages)."""
    a = np.asarray(getattr(dist_a, "percents", dist_a), dtype=np.float64)
    b = np.asarray(getattr(dist_b, "percents", dist_b), dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need equal-length vectors, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise ConstantInput("need at least 2 points")
    da = a - a.mean()
    db = b - b.mean()
    na = float(np.sqrt((da**2).sum()))
    nb = float(np.sqrt((db**2).sum()))
    if na == 0.0 or nb == 0.0:
        raise ConstantInput("constant input has no defined correlation")
    return float((da @ db) / (na * nb))


def standard_scopes(dataset: Dataset) -> list[str]:
    return [ALL] + [f"category:{c}" for c in dataset.category_names] + [
        "half:upper", "half:lower"]


def write_distribution_csv(path, distributions: list[Distribution]) -> None:
    """Rows "scope,concept,count,percent"; empty scopes carry a flag column."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("scope,concept,count,percent,empty\n")
        for dist in distributions:
            flag = "1" if dist.empty else "0"
            for concept, count, pct in zip(dist.concepts, dist.counts, dist.percents):
                fh.write(f"{dist.scope},{concept},{int(count)},{pct:.6f},{flag}\n")
            fh.write(f"{dist.scope},EXCLUDED,{dist.excluded},,{flag}\n")


def write_correlations_csv(path, rows: list[tuple[str, str, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("scope_a,scope_b,r\n")
        for scope_a, scope_b, r in rows:
            fh.write(f"{scope_a},{scope_b},{r:.12f}\n")
