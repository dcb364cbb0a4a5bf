"""Natural-scene dataset: images plus per-region ground-truth concept labels.

Each image is paired with a 100-line label file (one token per 10x10 grid
cell, row-major). A token is either a concept name or "EXCLUDED" for cells
whose ground truth spans multiple concepts; excluded cells never enter
training or testing. A separate two-column text file maps image ids to
scene-category names.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    MalformedLabelFile,
    MissingCategory,
    MissingLabelFile,
    UnknownConcept,
    UnreadableImage,
)
from .grid import REGIONS_PER_IMAGE

EXCLUDED = "EXCLUDED"
EXCLUDED_INDEX = -1

# Canonical ordering for the nine region-level concepts of the 6-category
# natural-scene corpus. Used for stable column layouts in reports.
NATURAL_SCENE_CONCEPTS = (
    "sky", "water", "grass", "trunks", "foliage", "field", "rocks", "flowers", "sand",
)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class ConceptId:
    """A region-level semantic concept with a dense index."""

    index: int
    name: str


@dataclass
class LabeledImage:
    """RGB raster plus its 100 row-major region labels (concept index or -1)."""

    id: str
    pixels: np.ndarray          # (H, W, 3) uint8
    labels: np.ndarray          # (100,) int, EXCLUDED_INDEX for excluded cells

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def labeled_regions(self) -> np.ndarray:
        """Region indices with a single-concept ground-truth label."""
        return np.flatnonzero(self.labels != EXCLUDED_INDEX)


@dataclass
class Dataset:
    images: list[LabeledImage]
    categories: dict[str, str]          # image id -> category name
    concepts: list[ConceptId]
    category_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.category_names:
            self.category_names = sorted(set(self.categories.values()))

    @property
    def n_images(self) -> int:
        return len(self.images)

    @property
    def concept_names(self) -> list[str]:
        return [c.name for c in self.concepts]

    def concept_index(self, name: str) -> int:
        for c in self.concepts:
            if c.name == name:
                return c.index
        raise UnknownConcept(name)


def _concept_sort_key(name: str):
    # Known concepts keep their canonical report order; anything else sorts
    # lexicographically after them.
    try:
        return (0, NATURAL_SCENE_CONCEPTS.index(name), name)
    except ValueError:
        return (1, 0, name)


def read_label_file(path: Path) -> list[str]:
    """100 non-empty tokens, one per line; raises MalformedLabelFile otherwise."""
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if len(lines) != REGIONS_PER_IMAGE:
        raise MalformedLabelFile(path, len(lines), f"expected 100 lines, found {len(lines)}")
    tokens = []
    for i, line in enumerate(lines, start=1):
        token = line.strip()
        if not token:
            raise MalformedLabelFile(path, i, "empty line")
        tokens.append(token)
    return tokens


def read_categories_file(path: Path) -> dict[str, str]:
    """Parse lines of "image_id<TAB>category"."""
    categories = {}
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise MalformedLabelFile(path, i, "expected 'image_id<TAB>category'")
        categories[parts[0]] = parts[1]
    return categories


def load_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise UnreadableImage(f"{path}: {exc}") from exc


def load_dataset(images_dir, labels_dir, categories_file, concepts=None) -> Dataset:
    """Load every image under images_dir with its label file of the same stem.

    When `concepts` (a list of names) is given, any label token outside it is
    rejected with UnknownConcept. Otherwise the concept list is discovered
    from the label files and ordered canonically (known concepts first, in
    report order, then lexicographic).
    """
    images_dir = Path(images_dir)
    labels_dir = Path(labels_dir)
    categories = read_categories_file(Path(categories_file))

    image_paths = sorted(
        (p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.stem,
    )

    allowed = None if concepts is None else set(concepts)
    token_lists: list[tuple[str, Path, list[str]]] = []
    seen: set[str] = set()
    for img_path in image_paths:
        label_path = labels_dir / (img_path.stem + ".txt")
        if not label_path.exists():
            raise MissingLabelFile(f"no label file for image {img_path.name!r}")
        tokens = read_label_file(label_path)
        for token in tokens:
            if token == EXCLUDED:
                continue
            if allowed is not None and token not in allowed:
                raise UnknownConcept(token, label_path)
            seen.add(token)
        token_lists.append((img_path.stem, img_path, tokens))

    if concepts is None:
        names = sorted(seen, key=_concept_sort_key)
    else:
        names = list(concepts)
    concept_list = [ConceptId(i, name) for i, name in enumerate(names)]
    index_of = {c.name: c.index for c in concept_list}

    images = []
    for image_id, img_path, tokens in token_lists:
        if image_id not in categories:
            raise MissingCategory(f"image {image_id!r} missing from categories file")
        labels = np.array(
            [EXCLUDED_INDEX if t == EXCLUDED else index_of[t] for t in tokens],
            dtype=np.int64,
        )
        images.append(LabeledImage(image_id, load_image(img_path), labels))

    return Dataset(images=images, categories=categories, concepts=concept_list)


def concept_census(dataset: Dataset) -> dict:
    """Labeled-region counts per (category, concept), with totals.

    Returns {"categories": [...], "concepts": [...], "counts": (M, N) array,
    "concept_totals": (N,), "overall": int}. Excluded cells are not counted.
    """
    cat_names = dataset.category_names
    cat_index = {name: i for i, name in enumerate(cat_names)}
    n_concepts = len(dataset.concepts)
    counts = np.zeros((len(cat_names), n_concepts), dtype=np.int64)
    for image in dataset.images:
        ci = cat_index[dataset.categories[image.id]]
        labeled = image.labels[image.labels != EXCLUDED_INDEX]
        counts[ci] += np.bincount(labeled, minlength=n_concepts)
    concept_totals = counts.sum(axis=0)
    return {
        "categories": list(cat_names),
        "concepts": dataset.concept_names,
        "counts": counts,
        "concept_totals": concept_totals,
        "overall": int(concept_totals.sum()),
    }
