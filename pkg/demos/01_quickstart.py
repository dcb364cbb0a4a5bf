"""Quickstart: generate a small synthetic scene set, detect keypoints, and
look at what one image's grid regions contain.

Run from the repository root:

    python3 demos/01_quickstart.py
"""

import tempfile
from pathlib import Path

import numpy as np

from scenebow.features import color_histogram, dwt_texture, rgb_to_hsv
from scenebow.grid import grid_regions
from scenebow.pipeline import extract_dataset
from scenebow.sift import SiftParams
from scenebow.synth import synth_dataset

work = Path(tempfile.mkdtemp(prefix="scenebow-demo-"))
print(f"working under {work}\n")

# Six 200x200 images, two per scene category. Every image carries a 10x10
# grid of region labels (sky / foliage / sand).
dataset = synth_dataset(work / "data", images=6, seed=0)
print(f"{len(dataset.images)} images, categories: {dataset.category_names}")
print(f"concepts: {[c.name for c in dataset.concepts]}\n")

# Detect difference-of-Gaussians keypoints and describe them. Results are
# cached as .scan files so a second call is instant.
extracted = extract_dataset(dataset, SiftParams(), work / "cache")
for rec in extracted:
    print(f"  {rec.image_id} ({rec.category:>8}): {rec.count:4d} keypoints")

# Pick the first image and count keypoints per grid region.
image = dataset.images[0]
rec = extracted[0]
rects = grid_regions(image.width, image.height)
per_region = np.zeros(100, dtype=int)
for x, y in rec.keypoints[:, :2]:
    for r in rects:
        if r.x1 <= x < r.x2 and r.y1 <= y < r.y2:
            per_region[r.region_index] += 1
            break

print(f"\nkeypoints per region of {image.id} (rows top to bottom):")
for row in per_region.reshape(10, 10):
    print("   " + " ".join(f"{v:3d}" for v in row))

# Regions also carry color and texture features. Show one labeled region.
region = rects[42]
patch = image.pixels[region.y1:region.y2, region.x1:region.x2]
hsv = rgb_to_hsv(patch)
hist = color_histogram(hsv)
tex = dwt_texture(hsv)
concept = dataset.concepts[image.labels[42]].name
print(f"\nregion 42 is labeled {concept!r}")
print(f"  color histogram: {len(hist)} bins, mass {hist.values.sum():.0f}")
print(f"  wavelet texture: {len(tex)} energies, max {tex.values.max():.4f}")
