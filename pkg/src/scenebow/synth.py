"""Procedural dataset generator for tests and demos.

Images are fully labeled on the 10x10 grid with three concepts rendered as
distinct region textures: a smooth blue gradient (sky), a green checker
(foliage), and a yellow speckle (sand). Three scene categories bias both the
concept mixture and its vertical layout, so upper and lower halves differ.
Each concept has two visual subtypes and regions get a random brightness
factor, which makes class-conditional feature distributions multimodal:
max-margin classifiers handle that markedly better than nearest-mean
prototypes, giving the expected classifier ordering on this data.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import Dataset, load_dataset
from .grid import grid_regions
from .rng import derive_seed

CONCEPTS = ("sky", "foliage", "sand")
CATEGORIES = ("seaside", "woodland", "desert")

# concept weights per category (sky, foliage, sand)
_BASE_WEIGHTS = {
    "seaside": (3.0, 1.0, 2.0),
    "woodland": (1.0, 3.5, 1.0),
    "desert": (1.2, 0.8, 3.0),
}
# row multipliers: sky favors the top rows, sand the bottom
_SKY_BY_ROW = np.linspace(2.5, 0.2, 10)
_SAND_BY_ROW = np.linspace(0.3, 2.2, 10)


def _sample_labels(rng: np.random.Generator, category: str) -> np.ndarray:
    base = np.array(_BASE_WEIGHTS[category])
    labels = np.empty(100, dtype=np.int64)
    for row in range(10):
        w = base * np.array([_SKY_BY_ROW[row], 1.0, _SAND_BY_ROW[row]])
        labels[row * 10 : (row + 1) * 10] = rng.choice(3, size=10, p=w / w.sum())
    return labels


def _sky_tile(rng, h, w, subtype):
    if subtype == 0:
        top, bottom = (135.0, 170.0, 235.0), (95.0, 135.0, 210.0)
    else:
        top, bottom = (190.0, 185.0, 235.0), (150.0, 155.0, 215.0)
    t = np.linspace(0.0, 1.0, h)[:, None, None]
    tile = np.array(top) * (1 - t) + np.array(bottom) * t
    return np.broadcast_to(tile, (h, w, 3)).copy()


def _foliage_tile(rng, h, w, subtype):
    # cell sizes stay above the detector's finest sampled scale; the dry
    # subtype borrows the sand palette so color alone cannot separate it,
    # only the checker geometry (codewords, wavelet energies) can
    if subtype == 0:
        cell, dark, light = 8, (34.0, 92.0, 41.0), (76.0, 142.0, 63.0)
    else:
        cell, dark, light = 6, (176.0, 156.0, 106.0), (214.0, 194.0, 144.0)
    yy, xx = np.mgrid[0:h, 0:w]
    phase = int(rng.integers(0, cell))
    checker = (((yy + phase) // cell + (xx + phase) // cell) % 2).astype(np.float64)[..., None]
    return np.array(dark) * (1 - checker) + np.array(light) * checker


def _sand_tile(rng, h, w, subtype):
    base = (212.0, 191.0, 142.0) if subtype == 0 else (188.0, 162.0, 104.0)
    tile = np.tile(np.array(base), (h, w, 1))
    yy, xx = np.mgrid[0:h, 0:w]
    if subtype == 0:
        n_dots, radius, depth = int(rng.integers(4, 7)), 3.0, 70.0
    else:
        n_dots, radius, depth = int(rng.integers(8, 12)), 2.2, 90.0
    margin = int(np.ceil(radius))
    for _ in range(n_dots):
        cy = int(rng.integers(margin, max(h - margin, margin + 1)))
        cx = int(rng.integers(margin, max(w - margin, margin + 1)))
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
        tile[mask] -= rng.uniform(0.7, 1.0) * depth
    return tile


_PAINTERS = (_sky_tile, _foliage_tile, _sand_tile)


def render_image(labels: np.ndarray, seed: int, size: int = 200) -> np.ndarray:
    """Deterministic uint8 RGB image whose grid regions carry the textures
    of the given concept labels."""
    rng = np.random.default_rng(seed)
    out = np.zeros((size, size, 3), dtype=np.float64)
    for rect in grid_regions(size, size):
        h, w = rect.height, rect.width
        concept = int(labels[rect.region_index])
        subtype = int(rng.random() < 0.35)
        tile = _PAINTERS[concept](rng, h, w, subtype)
        tile *= rng.uniform(0.72, 1.1)  # per-region brightness
        tile += rng.normal(0.0, 2.5, size=tile.shape)
        out[rect.y1 : rect.y2, rect.x1 : rect.x2] = tile
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def generate_dataset(
    out_dir,
    images: int = 60,
    seed: int = 0,
    size: int = 200,
    concepts: tuple[str, ...] = CONCEPTS,
) -> dict:
    """Write images/, labels/ and categories.tsv under out_dir. The first
    image of each category is stamped so every concept appears in both
    halves of at least one image."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    labels_dir = out_dir / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    categories_path = out_dir / "categories.tsv"
    lines = []
    seen_first: set[str] = set()
    for i in range(images):
        category = CATEGORIES[i % len(CATEGORIES)]
        image_id = f"img{i:03d}"
        labels = _sample_labels(np.random.default_rng(derive_seed(seed, "labels", i)),
                                category)
        if category not in seen_first:
            seen_first.add(category)
            labels[3:6] = [0, 1, 2]     # upper-half stamp (row 0)
            labels[53:56] = [0, 1, 2]   # lower-half stamp (row 5)
        pixels = render_image(labels, derive_seed(seed, "image", i), size)
        Image.fromarray(pixels).save(images_dir / f"{image_id}.png")
        with open(labels_dir / f"{image_id}.txt", "w", encoding="utf-8") as fh:
            fh.write("\n".join(concepts[c] for c in labels) + "\n")
        lines.append(f"{image_id}\t{category}")
    categories_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {
        "images_dir": images_dir,
        "labels_dir": labels_dir,
        "categories_file": categories_path,
        "count": images,
    }


def synth_dataset(out_dir, images: int = 60, seed: int = 0, size: int = 200) -> Dataset:
    """Generate and load in one step."""
    paths = generate_dataset(out_dir, images=images, seed=seed, size=size)
    return load_dataset(paths["images_dir"], paths["labels_dir"], paths["categories_file"])
