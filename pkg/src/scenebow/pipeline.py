"""Glue between the dataset and the learning stages.

Extracts (and caches) keypoint descriptors per image, computes per-region
color/texture feature tables, builds bag-of-visual-words count matrices
against a vocabulary, and assembles classifier input matrices for a named
feature combination.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cache as cache_io
from .cbow import build_half_region_cbows, build_region_cbows
from .dataset import Dataset
from .errors import CacheFingerprintMismatch, CorruptCache
from .features import color_histogram, color_moments, dwt_texture, rgb_to_hsv
from .grid import REGIONS_PER_IMAGE, grid_regions
from .sift import SiftParams, detect_and_describe, pairs_to_arrays

logger = logging.getLogger(__name__)

# bag parts by vocabulary kind, then color/texture parts, in display order
FEATURE_PARTS = ("IBOW", "UBOW", "ColHist", "Mom", "Wav")

FEATURE_COMBOS = (
    "IBOW",
    "UBOW",
    "ColHist",
    "Mom",
    "Wav",
    "IBOW+Mom",
    "UBOW+Mom",
    "IBOW+ColHist",
    "UBOW+ColHist",
    "IBOW+Wav",
    "UBOW+Wav",
    "IBOW+ColHist+Wav",
    "UBOW+ColHist+Wav",
    "ColHist+Wav",
)


def combo_parts(combo: str) -> tuple[str, ...]:
    """Validated component list of one of the 14 feature combinations."""
    if combo not in FEATURE_COMBOS:
        raise ValueError(f"unknown feature combination {combo!r}; "
                         f"expected one of {', '.join(FEATURE_COMBOS)}")
    return tuple(combo.split("+"))


@dataclass
class ImageDescriptors:
    """Keypoint table (x, y, scale, orientation) and descriptor matrix of
    one image, with identity and dimensions attached."""

    image_id: str
    category: str
    width: int
    height: int
    keypoints: np.ndarray
    descriptors: np.ndarray

    @property
    def count(self) -> int:
        return len(self.keypoints)


def extract_image(pixels: np.ndarray, image_id: str, category: str,
                  params: SiftParams) -> ImageDescriptors:
    pairs = detect_and_describe(pixels, params)
    kps, descs = pairs_to_arrays(pairs)
    return ImageDescriptors(image_id, category, pixels.shape[1], pixels.shape[0], kps, descs)


def extract_dataset(
    dataset: Dataset,
    params: SiftParams = SiftParams(),
    cache_dir=None,
    force: bool = False,
) -> list[ImageDescriptors]:
    """Descriptors for every image, reusing per-image cache files when their
    parameter fingerprint matches; stale or corrupt files are rebuilt."""
    out = []
    for image in dataset.images:
        category = dataset.categories[image.id]
        path = Path(cache_dir) / f"{image.id}.scan" if cache_dir else None
        if path is not None and path.exists() and not force:
            try:
                kps, descs = cache_io.load_descriptor_arrays(path, params)
                out.append(ImageDescriptors(image.id, category,
                                            image.pixels.shape[1], image.pixels.shape[0],
                                            kps, descs))
                continue
            except (CorruptCache, CacheFingerprintMismatch) as exc:
                logger.warning("rebuilding %s: %s", path, exc)
        rec = extract_image(image.pixels, image.id, category, params)
        if path is not None:
            cache_io.save_descriptor_arrays(path, params, rec.keypoints, rec.descriptors)
        out.append(rec)
    return out


@dataclass
class RegionTable:
    """Row-per-region view of a dataset in image-major, region-minor order:
    labels plus the three low-level feature blocks."""

    image_ids: list[str]
    categories: list[str]
    image_index: np.ndarray
    region_index: np.ndarray
    labels: np.ndarray
    colhist: np.ndarray
    moments: np.ndarray
    wavelet: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def rows_of_image(self, i: int) -> slice:
        return slice(i * REGIONS_PER_IMAGE, (i + 1) * REGIONS_PER_IMAGE)


def build_region_table(dataset: Dataset) -> RegionTable:
    n = len(dataset.images) * REGIONS_PER_IMAGE
    colhist = np.zeros((n, 84))
    moments = np.zeros((n, 9))
    wavelet = np.zeros((n, 18))
    labels = np.zeros(n, dtype=np.int64)
    image_index = np.zeros(n, dtype=np.int64)
    region_index = np.tile(np.arange(REGIONS_PER_IMAGE), len(dataset.images))

    for i, image in enumerate(dataset.images):
        hsv = rgb_to_hsv(image.pixels)
        height, width = image.pixels.shape[:2]
        base = i * REGIONS_PER_IMAGE
        image_index[base : base + REGIONS_PER_IMAGE] = i
        labels[base : base + REGIONS_PER_IMAGE] = image.labels
        for rect in grid_regions(width, height):
            tile = hsv[rect.y1 : rect.y2, rect.x1 : rect.x2]
            row = base + rect.region_index
            colhist[row] = color_histogram(tile).values
            moments[row] = color_moments(tile).values
            wavelet[row] = dwt_texture(tile).values

    return RegionTable(
        [im.id for im in dataset.images],
        [dataset.categories[im.id] for im in dataset.images],
        image_index,
        region_index,
        labels,
        colhist,
        moments,
        wavelet,
    )


def build_cbow_matrix(extracted: list[ImageDescriptors], vocabulary) -> np.ndarray:
    """(n_images*100, vocabulary size) count matrix in region-table order."""
    rows = []
    for rec in extracted:
        hists = build_region_cbows((rec.width, rec.height),
                                   (rec.keypoints, rec.descriptors),
                                   vocabulary, image_id=rec.image_id)
        rows.append(np.stack([h.counts for h in hists]))
    return np.vstack(rows).astype(np.int32)


def build_half_cbow_matrix(extracted: list[ImageDescriptors], v_upper, v_lower
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Two matrices in region-table order: rows of the upper matrix are valid
    for regions 0..49 of each image, rows of the lower for 50..99; the other
    half's rows are zero."""
    up_rows, lo_rows = [], []
    for rec in extracted:
        hists = build_half_region_cbows((rec.width, rec.height),
                                        (rec.keypoints, rec.descriptors),
                                        v_upper, v_lower, image_id=rec.image_id)
        up = np.zeros((REGIONS_PER_IMAGE, v_upper.size), dtype=np.int32)
        lo = np.zeros((REGIONS_PER_IMAGE, v_lower.size), dtype=np.int32)
        for h in hists:
            if h.region < 50:
                up[h.region] = h.counts
            else:
                lo[h.region] = h.counts
        up_rows.append(up)
        lo_rows.append(lo)
    return np.vstack(up_rows), np.vstack(lo_rows)


def descriptor_stream(extracted: list[ImageDescriptors]):
    """(category, width, height, keypoints, descriptors) tuples, the input
    shape of the half-vocabulary builders."""
    for rec in extracted:
        yield rec.category, rec.width, rec.height, rec.keypoints, rec.descriptors


def pooled_descriptors(extracted: list[ImageDescriptors]) -> np.ndarray:
    parts = [rec.descriptors for rec in extracted if len(rec.descriptors)]
    return np.vstack(parts) if parts else np.empty((0, 128), dtype=np.float32)


def per_category_descriptors(extracted: list[ImageDescriptors]) -> dict[str, np.ndarray]:
    grouped: dict[str, list[np.ndarray]] = {}
    for rec in extracted:
        if len(rec.descriptors):
            grouped.setdefault(rec.category, []).append(rec.descriptors)
    return {c: np.vstack(parts) for c, parts in grouped.items()}


def assemble_features(
    parts: tuple[str, ...],
    table: RegionTable,
    bows: dict[str, np.ndarray],
    rows: np.ndarray,
    normalize_parts: bool,
) -> np.ndarray:
    """Classifier input for the selected rows: the named parts concatenated,
    each row-wise unit-L2 normalized first when requested (the SVM path)."""
    blocks = []
    for part in parts:
        if part in ("IBOW", "UBOW"):
            if part not in bows:
                raise ValueError(f"no bag matrix supplied for {part}")
            block = bows[part][rows].astype(np.float64)
        elif part == "ColHist":
            block = table.colhist[rows]
        elif part == "Mom":
            block = table.moments[rows]
        elif part == "Wav":
            block = table.wavelet[rows]
        else:
            raise ValueError(f"unknown feature part {part!r}")
        if normalize_parts:
            norms = np.linalg.norm(block, axis=1, keepdims=True)
            block = block / np.where(norms > 0, norms, 1.0)
        blocks.append(block)
    return np.ascontiguousarray(np.hstack(blocks))
