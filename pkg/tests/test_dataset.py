import numpy as np
import pytest
from PIL import Image

from scenebow.dataset import (
    EXCLUDED,
    EXCLUDED_INDEX,
    NATURAL_SCENE_CONCEPTS,
    concept_census,
    load_dataset,
    read_categories_file,
    read_label_file,
)
from scenebow.errors import (
    MalformedLabelFile,
    MissingCategory,
    MissingLabelFile,
    UnknownConcept,
    UnreadableImage,
)


def _write_image(path, size=24, value=128):
    arr = np.full((size, size, 3), value, dtype=np.uint8)
    Image.fromarray(arr).save(path)


def _write_labels(path, tokens):
    path.write_text("\n".join(tokens) + "\n", encoding="utf-8")


def _mini_dataset(root, n=2):
    (root / "images").mkdir()
    (root / "labels").mkdir()
    rows = []
    for i in range(n):
        stem = f"pic{i}"
        _write_image(root / "images" / f"{stem}.png", value=40 * (i + 1))
        tokens = ["sky"] * 50 + ["sand"] * 49 + [EXCLUDED]
        _write_labels(root / "labels" / f"{stem}.txt", tokens)
        rows.append(f"{stem}\tcoast")
    (root / "categories.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return root


def test_label_file_roundtrip(tmp_path):
    tokens = ["sky"] * 99 + [EXCLUDED]
    path = tmp_path / "a.txt"
    _write_labels(path, tokens)
    assert read_label_file(path) == tokens


def test_label_file_wrong_length(tmp_path):
    path = tmp_path / "a.txt"
    _write_labels(path, ["sky"] * 99)
    with pytest.raises(MalformedLabelFile):
        read_label_file(path)


def test_label_file_blank_line(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("sky\n" * 50 + "\n" + "sky\n" * 49, encoding="utf-8")
    with pytest.raises(MalformedLabelFile):
        read_label_file(path)


def test_categories_file(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("a\tcoast\nb\tforest\n\n", encoding="utf-8")
    assert read_categories_file(path) == {"a": "coast", "b": "forest"}
    path.write_text("a coast\n", encoding="utf-8")
    with pytest.raises(MalformedLabelFile):
        read_categories_file(path)


def test_load_dataset(tmp_path):
    root = _mini_dataset(tmp_path)
    ds = load_dataset(root / "images", root / "labels", root / "categories.tsv")
    assert ds.n_images == 2
    assert [c.name for c in ds.concepts] == ["sky", "sand"]  # report order
    img = ds.images[0]
    assert img.labels.shape == (100,)
    assert (img.labels[:50] == 0).all()
    assert img.labels[99] == EXCLUDED_INDEX
    assert ds.categories["pic0"] == "coast"
    assert ds.category_names == ["coast"]


def test_load_dataset_orders_ids(tmp_path):
    root = _mini_dataset(tmp_path, n=3)
    ds = load_dataset(root / "images", root / "labels", root / "categories.tsv")
    assert [im.id for im in ds.images] == ["pic0", "pic1", "pic2"]


def test_concept_discovery_order(tmp_path):
    # known concepts take report order, unknown ones sort after
    root = _mini_dataset(tmp_path, n=1)
    tokens = ["zebra"] * 30 + ["foliage"] * 30 + ["sky"] * 40
    _write_labels(root / "labels" / "pic0.txt", tokens)
    ds = load_dataset(root / "images", root / "labels", root / "categories.tsv")
    assert [c.name for c in ds.concepts] == ["sky", "foliage", "zebra"]
    assert NATURAL_SCENE_CONCEPTS.index("sky") < NATURAL_SCENE_CONCEPTS.index("foliage")


def test_explicit_concept_list_rejects_unknown(tmp_path):
    root = _mini_dataset(tmp_path, n=1)
    with pytest.raises(UnknownConcept):
        load_dataset(root / "images", root / "labels", root / "categories.tsv",
                     concepts=["sky"])


def test_missing_label_file(tmp_path):
    root = _mini_dataset(tmp_path, n=1)
    (root / "labels" / "pic0.txt").unlink()
    with pytest.raises(MissingLabelFile):
        load_dataset(root / "images", root / "labels", root / "categories.tsv")


def test_missing_category(tmp_path):
    root = _mini_dataset(tmp_path, n=1)
    (root / "categories.tsv").write_text("other\tcoast\n", encoding="utf-8")
    with pytest.raises(MissingCategory):
        load_dataset(root / "images", root / "labels", root / "categories.tsv")


def test_unreadable_image(tmp_path):
    root = _mini_dataset(tmp_path, n=1)
    (root / "images" / "pic0.png").write_bytes(b"not a png")
    with pytest.raises(UnreadableImage):
        load_dataset(root / "images", root / "labels", root / "categories.tsv")


def test_concept_census(tmp_path):
    root = _mini_dataset(tmp_path)
    ds = load_dataset(root / "images", root / "labels", root / "categories.tsv")
    census = concept_census(ds)
    assert census["categories"] == ["coast"]
    assert census["counts"].tolist() == [[100, 98]]
    assert census["overall"] == 198  # excluded cells not counted


def test_synthetic_dataset_census(small_dataset):
    census = concept_census(small_dataset)
    assert census["overall"] == 900
    assert (census["concept_totals"] > 0).all()
