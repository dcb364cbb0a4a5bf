"""Per-region bag-of-visual-words histograms.

Each keypoint contributes one count to the histogram of the grid region
containing its center, at the index of its nearest visual word. Histograms
are raw counts; any normalization happens downstream. Regions without
keypoints keep all-zero histograms and still participate in experiments.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import EXCLUDED
from .errors import (
    DescriptorLengthMismatch,
    HalfVocabularyModeMismatch,
    MixedVocabularies,
)
from .grid import LOWER, REGIONS_PER_IMAGE, UPPER, regions_of_points
from .vocabulary import Vocabulary, quantize_batch


@dataclass
class CbowHistogram:
    """Visual-word counts for one region; sum equals the number of keypoints
    whose center lies in the region (for the region's vocabulary)."""

    counts: np.ndarray
    image_id: str
    region: int
    fingerprint: str

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)


def _image_dims(image) -> tuple[int, int]:
    """(width, height) from an image array or a (width, height) pair."""
    if isinstance(image, np.ndarray):
        return image.shape[1], image.shape[0]
    width, height = image
    return int(width), int(height)


def _pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2:
        kps, descs = pairs
        return np.asarray(kps), np.asarray(descs)
    kps = np.array([(kp.x, kp.y) for kp, _ in pairs], dtype=np.float64).reshape(-1, 2)
    descs = (
        np.stack([d for _, d in pairs])
        if pairs
        else np.empty((0, 128), dtype=np.float32)
    )
    return kps, descs


def _check_width(descs: np.ndarray, vocabulary: Vocabulary) -> None:
    if len(descs) and descs.shape[1] != vocabulary.words.shape[1]:
        raise DescriptorLengthMismatch(
            f"descriptors have {descs.shape[1]} dims, vocabulary words "
            f"{vocabulary.words.shape[1]}"
        )


def build_region_cbows(image, pairs, vocabulary: Vocabulary, image_id: str = "") -> list[CbowHistogram]:
    """100 histograms against one whole-image vocabulary."""
    width, height = _image_dims(image)
    kps, descs = _pair_arrays(pairs)
    _check_width(descs, vocabulary)
    table = np.zeros((REGIONS_PER_IMAGE, vocabulary.size), dtype=np.int64)
    if len(kps):
        regions = regions_of_points(kps[:, 0], kps[:, 1], width, height)
        words = quantize_batch(descs, vocabulary)
        np.add.at(table, (regions, words), 1)
    fp = vocabulary.fingerprint()
    return [CbowHistogram(row, image_id, r, fp) for r, row in enumerate(table)]


def build_half_region_cbows(
    image, pairs, v_upper: Vocabulary, v_lower: Vocabulary, image_id: str = ""
) -> list[CbowHistogram]:
    """100 histograms where upper-half regions (0..49) are quantized against
    the upper vocabulary and lower-half regions against the lower one."""
    if v_upper.half != UPPER or v_lower.half != LOWER or v_upper.kind != v_lower.kind:
        raise HalfVocabularyModeMismatch(
            f"need matching {UPPER}/{LOWER} vocabularies of one kind, got "
            f"{v_upper.kind_name} and {v_lower.kind_name}"
        )
    width, height = _image_dims(image)
    kps, descs = _pair_arrays(pairs)
    _check_width(descs, v_upper)
    _check_width(descs, v_lower)

    upper_table = np.zeros((50, v_upper.size), dtype=np.int64)
    lower_table = np.zeros((50, v_lower.size), dtype=np.int64)
    if len(kps):
        regions = regions_of_points(kps[:, 0], kps[:, 1], width, height)
        in_upper = regions < 50
        if in_upper.any():
            words = quantize_batch(descs[in_upper], v_upper)
            np.add.at(upper_table, (regions[in_upper], words), 1)
        if (~in_upper).any():
            words = quantize_batch(descs[~in_upper], v_lower)
            np.add.at(lower_table, (regions[~in_upper] - 50, words), 1)

    fp_up, fp_lo = v_upper.fingerprint(), v_lower.fingerprint()
    out = [CbowHistogram(row, image_id, r, fp_up) for r, row in enumerate(upper_table)]
    out += [CbowHistogram(row, image_id, r + 50, fp_lo) for r, row in enumerate(lower_table)]
    return out


def sum_cbows_by_concept(histograms, labels) -> dict[str, np.ndarray]:
    """Element-wise sum of histograms per concept name; regions labeled
    EXCLUDED are skipped. All histograms must share one vocabulary."""
    sums: dict[str, np.ndarray] = {}
    fingerprint = None
    for hist, label in zip(histograms, labels):
        if label == EXCLUDED:
            continue
        if fingerprint is None:
            fingerprint = hist.fingerprint
        elif hist.fingerprint != fingerprint:
            raise MixedVocabularies(
                f"histogram {hist.image_id}/{hist.region} uses a different vocabulary"
            )
        if label in sums:
            sums[label] = sums[label] + hist.counts
        else:
            sums[label] = hist.counts.astype(np.int64).copy()
    return sums


def write_cbow_csv(path, histograms, labels) -> None:
    """Rows "image_id,region,label,c0..": one per region histogram."""
    with open(path, "w", encoding="utf-8") as fh:
        size = len(histograms[0].counts) if histograms else 0
        header = ",".join(f"c{i}" for i in range(size))
        fh.write(f"image_id,region,label,{header}\n")
        for hist, label in zip(histograms, labels):
            counts = ",".join(str(int(c)) for c in hist.counts)
            fh.write(f"{hist.image_id},{hist.region},{label},{counts}\n")


def write_concept_sums_csv(path, sums: dict[str, np.ndarray]) -> None:
    """Rows "concept,w0..": one summed histogram per concept."""
    with open(path, "w", encoding="utf-8") as fh:
        size = len(next(iter(sums.values()))) if sums else 0
        header = ",".join(f"w{i}" for i in range(size))
        fh.write(f"concept,{header}\n")
        for concept in sorted(sums):
            counts = ",".join(str(int(c)) for c in sums[concept])
            fh.write(f"{concept},{counts}\n")
