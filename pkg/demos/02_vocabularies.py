"""Visual vocabularies: universal vs. integrated, whole-image vs. per-half.

A vocabulary is an ordered set of k-means centroids over 128-D keypoint
descriptors. The universal kind pools descriptors from all scene categories
into one clustering; the integrated kind clusters each category separately
and concatenates the blocks, so every word remembers which category it came
from. Half vocabularies use only keypoints from the top or bottom five grid
rows.

    python3 demos/02_vocabularies.py
"""

import tempfile
from pathlib import Path

import numpy as np

from scenebow.pipeline import (
    descriptor_stream,
    extract_dataset,
    per_category_descriptors,
    pooled_descriptors,
)
from scenebow.sift import SiftParams
from scenebow.synth import synth_dataset
from scenebow.vocabulary import (
    INTEGRATED,
    UPPER,
    build_half_vocabularies,
    build_integrated,
    build_universal,
    quantize_batch,
    read_vocabulary,
    write_vocabulary,
)

work = Path(tempfile.mkdtemp(prefix="scenebow-demo-"))
dataset = synth_dataset(work / "data", images=9, seed=0)
extracted = extract_dataset(dataset, SiftParams(), work / "cache")
pooled = pooled_descriptors(extracted)
print(f"{len(pooled)} descriptors pooled from {len(extracted)} images\n")

K = 16
universal = build_universal(pooled, K, seed=0)
print(f"universal vocabulary: {universal.size} words, kind {universal.kind_name!r}")

by_category = per_category_descriptors(extracted)
integrated = build_integrated(by_category, K, seed=0,
                              categories=tuple(dataset.category_names))
print(f"integrated vocabulary: {integrated.size} words "
      f"({K} per category x {len(integrated.categories)})")
for index in (0, K, 2 * K):
    category = integrated.categories[integrated.provenance_of(index)]
    print(f"  word {index:3d} comes from category {category!r}")

# Quantization assigns each descriptor to its nearest word.
words = quantize_batch(pooled, integrated)
usage = np.bincount(words, minlength=integrated.size)
print(f"\nthe {len(pooled)} descriptors hit {np.count_nonzero(usage)} of "
      f"{integrated.size} integrated words; busiest word gets {usage.max()}")

# Upper-half words come only from keypoints in grid rows 0-4.
upper = build_half_vocabularies(descriptor_stream(extracted), UPPER, INTEGRATED,
                                K, seed=0, categories=tuple(dataset.category_names))
print(f"upper-half vocabulary: {upper.size} words, kind {upper.kind_name!r}")

# Vocabularies round-trip through CSV without losing a bit.
path = work / "integrated.csv"
write_vocabulary(path, integrated)
again = read_vocabulary(path)
assert again.fingerprint() == integrated.fingerprint()
print(f"\nwrote and re-read {path.name}: fingerprint {again.fingerprint()} matches")
