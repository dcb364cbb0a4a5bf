import numpy as np
import pytest

from scenebow.errors import DataError, EmptyCategory, TooFewPoints
from scenebow.grid import LOWER, UPPER
from scenebow.rng import derive_seed
from scenebow.vocabulary import (
    INTEGRATED,
    UNIVERSAL,
    Vocabulary,
    build_half_vocabularies,
    build_integrated,
    build_universal,
    kmeans,
    quantize,
    quantize_batch,
    read_vocabulary,
    split_descriptors_by_half,
    write_vocabulary,
)


def test_kmeans_objective_never_increases():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n = int(rng.integers(30, 200))
        d = int(rng.integers(2, 16))
        k = int(rng.integers(1, 9))
        pts = rng.normal(size=(n, d))
        result = kmeans(pts, k, seed=trial)
        obj = np.array(result.objective)
        assert len(obj) >= 1
        assert (np.diff(obj) <= 1e-9 * obj[0]).all()
        assert result.assignments.min() >= 0 and result.assignments.max() < k


def test_kmeans_single_cluster_is_mean():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(64, 7))
    result = kmeans(pts, 1, seed=0)
    assert np.abs(result.centroids[0] - pts.mean(axis=0)).max() <= 1e-9


def test_kmeans_recovers_two_blobs():
    rng = np.random.default_rng(2)
    sigma, n = 0.05, 400
    a = rng.normal((0.0, 0.0), sigma, size=(n, 2))
    b = rng.normal((3.0, 3.0), sigma, size=(n, 2))
    result = kmeans(np.vstack([a, b]), 2, seed=0)
    got = result.centroids[np.argsort(result.centroids[:, 0])]
    limit = 3 * sigma / np.sqrt(n)
    assert np.abs(got[0] - a.mean(axis=0)).max() <= limit
    assert np.abs(got[1] - b.mean(axis=0)).max() <= limit


def test_kmeans_centroids_consistent_with_assignments():
    # at return, each centroid is the mean of its assigned points
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(150, 5))
    result = kmeans(pts, 6, seed=4)
    for c in range(6):
        members = pts[result.assignments == c]
        assert len(members) > 0
        np.testing.assert_allclose(result.centroids[c], members.mean(axis=0), atol=1e-9)


def test_kmeans_rejects_bad_sizes():
    with pytest.raises(TooFewPoints):
        kmeans(np.zeros((3, 4)), 5)
    with pytest.raises(ValueError):
        kmeans(np.zeros((10, 4)), 0)
    with pytest.raises(ValueError):
        kmeans(np.zeros(10), 2)


def test_kmeans_deterministic():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(120, 8))
    a = kmeans(pts, 5, seed=9)
    b = kmeans(pts, 5, seed=9)
    assert (a.centroids == b.centroids).all()
    assert (a.assignments == b.assignments).all()
    assert a.objective == b.objective


def test_quantize_matches_brute_force():
    rng = np.random.default_rng(6)
    words = rng.random((40, 128), dtype=np.float32)
    vocab = Vocabulary(words, UNIVERSAL, k_per_block=40)
    descs = rng.random((500, 128))
    batch = quantize_batch(descs, vocab, chunk=64)
    w64 = words.astype(np.float64)
    for i, d in enumerate(descs):
        d2 = ((w64 - d) ** 2).sum(axis=1)
        expect = int(np.argmin(d2))
        assert quantize(d, vocab) == expect
        # matmul-trick path may flip only exact ties, absent in random data
        assert batch[i] == expect


def test_quantize_tie_goes_to_lowest_index():
    words = np.zeros((8, 128), dtype=np.float32)
    words[2, 0] = 1.0
    words[5, 0] = -1.0
    words[3, 1] = 5.0
    words[(0, 1, 4, 6, 7), 2] = 9.0
    vocab = Vocabulary(words, UNIVERSAL, k_per_block=8)
    probe = np.zeros(128)
    assert quantize(probe, vocab) == 2  # equidistant to words 2 and 5
    assert quantize_batch(probe[None, :], vocab)[0] == 2


def test_universal_vocabulary_build():
    rng = np.random.default_rng(7)
    descs = rng.random((300, 128))
    vocab = build_universal(descs, k=12, seed=0)
    assert vocab.kind == UNIVERSAL and vocab.size == 12
    assert vocab.kind_name == "Universal"
    assert vocab.words.dtype == np.float32
    assert (vocab.provenance == -1).all()
    assert vocab.provenance_of(3) == -1


def test_integrated_blocks_match_per_category_clusterings():
    rng = np.random.default_rng(8)
    per_cat = {
        "forest": rng.random((90, 128)),
        "coast": rng.random((70, 128)),
        "plain": rng.random((80, 128)),
    }
    k, seed = 6, 11
    vocab = build_integrated(per_cat, k=k, seed=seed)
    assert vocab.categories == ("coast", "forest", "plain")  # lexicographic
    assert vocab.size == 3 * k
    for c, name in enumerate(vocab.categories):
        part = kmeans(per_cat[name], k, seed=derive_seed(seed, "integrated", name))
        block = vocab.words[c * k : (c + 1) * k]
        np.testing.assert_array_equal(block, part.centroids.astype(np.float32))
        assert vocab.provenance_of(c * k) == c
        assert vocab.provenance_of((c + 1) * k - 1) == c


def test_integrated_rejects_empty_category():
    rng = np.random.default_rng(9)
    with pytest.raises(EmptyCategory):
        build_integrated({"a": rng.random((30, 128)), "b": np.empty((0, 128))}, k=4)


def test_split_descriptors_by_half():
    kps = np.array([
        [5.0, 5.0, 1.0, 0.0],    # top rows
        [5.0, 95.0, 1.0, 0.0],   # bottom rows
        [50.0, 49.0, 1.0, 0.0],  # last upper row
        [50.0, 50.0, 1.0, 0.0],  # first lower row
    ])
    descs = np.arange(4 * 128, dtype=np.float64).reshape(4, 128)
    parts = split_descriptors_by_half(100, 100, kps, descs)
    assert (parts[UPPER] == descs[[0, 2]]).all()
    assert (parts[LOWER] == descs[[1, 3]]).all()
    empty = split_descriptors_by_half(100, 100, np.empty((0, 4)), np.empty((0, 128)))
    assert len(empty[UPPER]) == 0 and len(empty[LOWER]) == 0


def _half_images(rng, n_per_cat=2):
    images = []
    for cat in ("woods", "shore"):
        for _ in range(n_per_cat):
            kps = np.column_stack([
                rng.uniform(0, 100, size=40),
                rng.uniform(0, 100, size=40),
                np.full(40, 2.0),
                np.zeros(40),
            ])
            descs = rng.random((40, 128))
            images.append((cat, 100, 100, kps, descs))
    return images


def test_half_vocabulary_builds_and_names():
    rng = np.random.default_rng(10)
    images = _half_images(rng)
    up = build_half_vocabularies(images, UPPER, UNIVERSAL, k=5, seed=0)
    assert up.half == UPPER and up.kind_name == "UniversalHalf(Upper)"
    lo = build_half_vocabularies(images, LOWER, INTEGRATED, k=5, seed=0)
    assert lo.half == LOWER and lo.kind_name == "IntegratedHalf(Lower)"
    assert lo.categories == ("shore", "woods")
    assert lo.size == 10


def test_half_vocabulary_uses_only_that_half():
    rng = np.random.default_rng(12)
    images = _half_images(rng)
    up = build_half_vocabularies(images, UPPER, UNIVERSAL, k=5, seed=0)
    pooled = []
    for _, w, h, kps, descs in images:
        pooled.append(split_descriptors_by_half(w, h, kps, descs)[UPPER])
    expect = kmeans(np.vstack(pooled), 5, seed=derive_seed(0, "half", UPPER))
    np.testing.assert_array_equal(up.words, expect.centroids.astype(np.float32))


def test_half_vocabulary_argument_validation():
    rng = np.random.default_rng(13)
    images = _half_images(rng)
    with pytest.raises(ValueError):
        build_half_vocabularies(images, "middle", UNIVERSAL, k=4)
    with pytest.raises(ValueError):
        build_half_vocabularies(images, UPPER, "Fancy", k=4)
    with pytest.raises(TooFewPoints):
        build_half_vocabularies(images, UPPER, UNIVERSAL, k=10_000)


def test_vocabulary_fingerprint_sensitivity():
    rng = np.random.default_rng(14)
    words = rng.random((6, 128), dtype=np.float32)
    a = Vocabulary(words, UNIVERSAL, k_per_block=6)
    b = Vocabulary(words.copy(), UNIVERSAL, k_per_block=6)
    assert a.fingerprint() == b.fingerprint()
    c = Vocabulary(words, UNIVERSAL, half=UPPER, k_per_block=6)
    assert c.fingerprint() != a.fingerprint()
    changed = words.copy()
    changed[0, 0] += 1e-3
    assert Vocabulary(changed, UNIVERSAL, k_per_block=6).fingerprint() != a.fingerprint()


def test_vocabulary_validation():
    with pytest.raises(DataError):
        Vocabulary(np.full((3, 128), np.nan), UNIVERSAL, k_per_block=3)
    with pytest.raises(ValueError):
        Vocabulary(np.zeros((3, 128)), "Strange", k_per_block=3)
    with pytest.raises(DataError):
        Vocabulary(np.zeros((7, 128)), INTEGRATED, k_per_block=4, categories=("a", "b"))


def test_vocabulary_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(15)
    per_cat = {"coast": rng.random((30, 128)), "forest": rng.random((30, 128))}
    vocab = build_integrated(per_cat, k=4, seed=2)
    path = tmp_path / "vocab.csv"
    write_vocabulary(path, vocab)
    back = read_vocabulary(path)
    assert back.kind == INTEGRATED and back.half is None
    assert back.categories == vocab.categories
    assert back.k_per_block == 4
    assert (back.words == vocab.words).all()  # %.9g is lossless for float32
    assert back.fingerprint() == vocab.fingerprint()

    half = build_half_vocabularies(_half_images(np.random.default_rng(16)),
                                   UPPER, UNIVERSAL, k=5, seed=0)
    write_vocabulary(tmp_path / "half.csv", half)
    again = read_vocabulary(tmp_path / "half.csv")
    assert again.half == UPPER and again.kind == UNIVERSAL
    assert (again.words == half.words).all()


def test_vocabulary_csv_rejects_corruption(tmp_path):
    rng = np.random.default_rng(17)
    vocab = build_universal(rng.random((40, 128)), k=4, seed=0)
    path = tmp_path / "v.csv"
    write_vocabulary(path, vocab)
    lines = path.read_text().splitlines()

    bad = tmp_path / "bad1.csv"
    bad.write_text("\n".join(lines[1:]) + "\n")  # kind header dropped
    with pytest.raises(DataError):
        read_vocabulary(bad)

    swapped = lines[:]
    swapped[3], swapped[4] = swapped[4], swapped[3]  # word indices out of order
    bad2 = tmp_path / "bad2.csv"
    bad2.write_text("\n".join(swapped) + "\n")
    with pytest.raises(DataError):
        read_vocabulary(bad2)

    short = lines[:]
    short[3] = ",".join(short[3].split(",")[:-1])  # one float missing
    bad3 = tmp_path / "bad3.csv"
    bad3.write_text("\n".join(short) + "\n")
    with pytest.raises(DataError):
        read_vocabulary(bad3)
