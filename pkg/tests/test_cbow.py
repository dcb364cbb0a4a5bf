import numpy as np
import pytest

from scenebow.cbow import (
    build_half_region_cbows,
    build_region_cbows,
    sum_cbows_by_concept,
    write_cbow_csv,
    write_concept_sums_csv,
)
from scenebow.dataset import EXCLUDED
from scenebow.errors import (
    DescriptorLengthMismatch,
    HalfVocabularyModeMismatch,
    MixedVocabularies,
)
from scenebow.grid import LOWER, UPPER, region_of_point
from scenebow.vocabulary import UNIVERSAL, Vocabulary


def _vocab(rng, size=10, half=None):
    return Vocabulary(rng.random((size, 128), dtype=np.float32), UNIVERSAL,
                      half=half, k_per_block=size)


def _random_scene(rng, n=200, w=120, h=90):
    kps = np.column_stack([rng.uniform(0, w, size=n), rng.uniform(0, h, size=n)])
    descs = rng.random((n, 128))
    return (w, h), kps, descs


def test_mass_conservation_whole(rng):
    dims, kps, descs = _random_scene(rng)
    vocab = _vocab(rng)
    hists = build_region_cbows(dims, (kps, descs), vocab, image_id="im")
    assert len(hists) == 100
    assert sum(int(h.counts.sum()) for h in hists) == len(kps)
    # per-region counts match a direct scan
    for h in hists[:10]:
        inside = [i for i in range(len(kps))
                  if region_of_point(kps[i, 0], kps[i, 1], *dims) == h.region]
        assert int(h.counts.sum()) == len(inside)


def test_mass_conservation_halves(rng):
    dims, kps, descs = _random_scene(rng)
    up = _vocab(rng, size=8, half=UPPER)
    lo = _vocab(rng, size=12, half=LOWER)
    hists = build_half_region_cbows(dims, (kps, descs), up, lo, image_id="im")
    assert len(hists) == 100
    assert sum(int(h.counts.sum()) for h in hists) == len(kps)
    for h in hists:
        expected = up.size if h.region < 50 else lo.size
        assert len(h.counts) == expected
        assert h.fingerprint == (up if h.region < 50 else lo).fingerprint()


def test_no_keypoints_keeps_zero_histograms(rng):
    vocab = _vocab(rng)
    hists = build_region_cbows((50, 50), (np.empty((0, 2)), np.empty((0, 128))),
                               vocab)
    assert len(hists) == 100
    assert all(int(h.counts.sum()) == 0 for h in hists)
    assert [h.region for h in hists] == list(range(100))


def test_counts_land_on_nearest_word():
    # descriptors equal to specific words, keypoints in known regions
    words = np.zeros((4, 128), dtype=np.float32)
    for i in range(4):
        words[i, i] = 1.0
    vocab = Vocabulary(words, UNIVERSAL, k_per_block=4)
    kps = np.array([[5.0, 5.0], [5.0, 6.0], [95.0, 95.0]])
    descs = np.zeros((3, 128))
    descs[0, 1] = 1.0
    descs[1, 1] = 1.0
    descs[2, 3] = 1.0
    hists = build_region_cbows((100, 100), (kps, descs), vocab, image_id="t")
    assert hists[0].counts.tolist() == [0, 2, 0, 0]
    assert hists[99].counts.tolist() == [0, 0, 0, 1]
    others = [h for h in hists if h.region not in (0, 99)]
    assert all(int(h.counts.sum()) == 0 for h in others)


def test_half_mode_mismatch_rejected(rng):
    dims, kps, descs = _random_scene(rng, n=20)
    up = _vocab(rng, half=UPPER)
    lo = _vocab(rng, half=LOWER)
    with pytest.raises(HalfVocabularyModeMismatch):
        build_half_region_cbows(dims, (kps, descs), lo, up)  # swapped
    with pytest.raises(HalfVocabularyModeMismatch):
        build_half_region_cbows(dims, (kps, descs), _vocab(rng), lo)


def test_descriptor_width_checked(rng):
    vocab = _vocab(rng)
    kps = np.array([[5.0, 5.0]])
    with pytest.raises(DescriptorLengthMismatch):
        build_region_cbows((50, 50), (kps, np.zeros((1, 64))), vocab)


def test_sum_by_concept_skips_excluded(rng):
    dims, kps, descs = _random_scene(rng)
    vocab = _vocab(rng)
    hists = build_region_cbows(dims, (kps, descs), vocab, image_id="im")
    labels = (["sky"] * 40 + [EXCLUDED] * 10 + ["sand"] * 50)
    sums = sum_cbows_by_concept(hists, labels)
    assert set(sums) == {"sky", "sand"}
    expect_sky = np.sum([h.counts for h in hists[:40]], axis=0)
    np.testing.assert_array_equal(sums["sky"], expect_sky)
    total = sum(int(v.sum()) for v in sums.values())
    skipped = sum(int(h.counts.sum()) for h in hists[40:50])
    assert total == sum(int(h.counts.sum()) for h in hists) - skipped


def test_sum_by_concept_rejects_mixed_vocabularies(rng):
    dims, kps, descs = _random_scene(rng, n=30)
    a = build_region_cbows(dims, (kps, descs), _vocab(rng), image_id="a")
    b = build_region_cbows(dims, (kps, descs), _vocab(rng), image_id="b")
    with pytest.raises(MixedVocabularies):
        sum_cbows_by_concept(a + b, ["sky"] * 200)


def test_cbow_csv_format(tmp_path, rng):
    dims, kps, descs = _random_scene(rng, n=15, w=60, h=60)
    vocab = _vocab(rng, size=3)
    hists = build_region_cbows(dims, (kps, descs), vocab, image_id="im0")
    labels = ["sky"] * 100
    path = tmp_path / "cbow.csv"
    write_cbow_csv(path, hists, labels)
    lines = path.read_text().splitlines()
    assert lines[0] == "image_id,region,label,c0,c1,c2"
    assert len(lines) == 101
    first = lines[1].split(",")
    assert first[:3] == ["im0", "0", "sky"]
    total = sum(int(v) for ln in lines[1:] for v in ln.split(",")[3:])
    assert total == 15

    sums = sum_cbows_by_concept(hists, labels)
    spath = tmp_path / "sums.csv"
    write_concept_sums_csv(spath, sums)
    rows = spath.read_text().splitlines()
    assert rows[0] == "concept,w0,w1,w2"
    assert rows[1].startswith("sky,")
    assert sum(int(v) for v in rows[1].split(",")[1:]) == 15
