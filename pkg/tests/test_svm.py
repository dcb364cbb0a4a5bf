import numpy as np
import pytest

import scenebow.svm as svm_mod
from scenebow.errors import (
    CorruptCache,
    DimensionMismatch,
    NonConvergence,
    SingleClass,
)
from scenebow.svm import (
    DEFAULT_C_GRID,
    KernelCache,
    decision_values,
    hik,
    hik_gram,
    load_svm_model,
    save_svm_model,
    select_C,
    svm_predict,
    svm_predict_batch,
    svm_train,
)


def _histograms(rng, n, d=20):
    return rng.dirichlet(np.ones(d), size=n) * rng.uniform(5, 50, size=(n, 1))


def test_hik_basics():
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([2.0, 1.0, 5.0])
    assert hik(a, b) == 1 + 1 + 3
    assert hik(a, a) == a.sum()
    assert hik(a, b) == hik(b, a)
    with pytest.raises(DimensionMismatch):
        hik(a, np.zeros(4))


def test_gram_symmetric_and_psd(rng):
    x = _histograms(rng, 50)
    gram = hik_gram(x, x)
    assert np.abs(gram - gram.T).max() <= 1e-10
    np.testing.assert_allclose(np.diagonal(gram), x.sum(axis=1), atol=1e-10)
    eig = np.linalg.eigvalsh(gram)
    assert eig.min() >= -1e-8 * np.trace(gram)


def test_gram_jit_and_numpy_paths_agree(rng, monkeypatch):
    x = _histograms(rng, 30)
    q = _histograms(rng, 7)
    fast = hik_gram(q, x)
    monkeypatch.setattr(svm_mod, "_HAVE_NUMBA", False)
    slow = hik_gram(q, x)
    np.testing.assert_allclose(fast, slow, atol=1e-10)


def test_kernel_cache_row_matches_full(rng):
    x = _histograms(rng, 25)
    full = KernelCache(x)
    lru = KernelCache(x, full_limit=4)
    gram = hik_gram(x, x)
    for i in (0, 7, 24, 7):
        np.testing.assert_allclose(full.row(i), gram[i], atol=1e-12)
        np.testing.assert_allclose(lru.row(i), gram[i], atol=1e-12)
    np.testing.assert_allclose(full.diagonal(), np.diagonal(gram), atol=1e-12)
    np.testing.assert_allclose(lru.diagonal(), np.diagonal(gram), atol=1e-12)


def _smo_problem(rng, n=60, separated=2.0):
    half = n // 2
    a = rng.dirichlet(np.ones(6), size=half) + separated * np.array([1, 0, 0, 0, 0, 0])
    b = rng.dirichlet(np.ones(6), size=n - half) + separated * np.array([0, 0, 0, 0, 0, 1])
    x = np.vstack([a, b])
    y = np.concatenate([np.ones(half), -np.ones(n - half)])
    return x, y


def test_smo_dual_objective_monotone_and_kkt(rng):
    for trial in range(5):
        x, y = _smo_problem(rng, separated=0.3)
        kernel = KernelCache(x)
        alpha, bias, residual, trace = svm_mod._smo(kernel, y, c=1.0,
                                                    tol=1e-3, max_iter=100_000)
        obj = np.array(trace)
        assert (np.diff(obj) >= -1e-9 * max(1.0, np.abs(obj).max())).all()
        assert residual <= 1e-3
        assert alpha.min() >= 0.0 and alpha.max() <= 1.0
        assert abs((alpha * y).sum()) <= 1e-9


def test_separable_toy_reaches_perfect_training_accuracy(rng):
    x, y = _smo_problem(rng, n=40, separated=2.0)
    labels = np.where(y > 0, 3, 8)
    model = svm_train(x, labels, c=10.0)
    pred = svm_predict_batch(model, x)
    assert (pred == labels).all()
    assert model.classes.tolist() == [3, 8]
    assert model.pairs[0].pos_class == 3 and model.pairs[0].neg_class == 8


def test_three_class_dirichlet_training_accuracy(rng):
    protos = np.eye(3).repeat(4, axis=1) * 3.0
    x = np.vstack([rng.dirichlet(np.ones(12), size=50) + protos[c] for c in range(3)])
    y = np.repeat(np.arange(3), 50)
    model = svm_train(x, y, c=4.0)
    acc = (svm_predict_batch(model, x) == y).mean()
    assert acc >= 0.99
    assert len(model.pairs) == 3
    for pair in model.pairs:
        assert pair.pos_class < pair.neg_class


def test_single_sample_prediction_matches_batch(rng):
    x, y = _smo_problem(rng)
    labels = np.where(y > 0, 0, 1)
    model = svm_train(x, labels, c=1.0)
    batch = svm_predict_batch(model, x[:5])
    singles = [svm_predict(model, row) for row in x[:5]]
    assert batch.tolist() == singles


def test_decision_values_shape_and_width_check(rng):
    x, y = _smo_problem(rng)
    model = svm_train(x, np.where(y > 0, 0, 1), c=1.0)
    vals = decision_values(model, x[:4])
    assert vals.shape == (4, 1)
    with pytest.raises(DimensionMismatch):
        decision_values(model, np.zeros((2, 5)))


def test_single_class_rejected(rng):
    x = _histograms(rng, 10)
    with pytest.raises(SingleClass):
        svm_train(x, np.zeros(10, dtype=int))


def test_nonconvergence_reported(rng):
    x, y = _smo_problem(rng, separated=0.0)
    with pytest.raises(NonConvergence):
        svm_train(x, np.where(y > 0, 0, 1), c=1.0, max_iter=3)


def test_select_c_single_value_shortcut(rng):
    x, y = _smo_problem(rng, n=20)
    assert select_C(x, np.where(y > 0, 0, 1), grid=[2.5]) == 2.5


def test_select_c_tie_prefers_smallest(rng):
    # trivially separable data scores 1.0 for every candidate
    x, y = _smo_problem(rng, n=30, separated=3.0)
    labels = np.where(y > 0, 0, 1)
    got = select_C(x, labels, grid=[8.0, 0.5, 2.0], folds=3)
    assert got == 0.5


def test_default_grid_is_sorted_powers_of_two():
    assert DEFAULT_C_GRID == tuple(2.0**p for p in range(-3, 8))


def test_model_file_roundtrip(tmp_path, rng):
    protos = np.eye(3).repeat(4, axis=1) * 2.0
    x = np.vstack([rng.dirichlet(np.ones(12), size=30) + protos[c] for c in range(3)])
    y = np.repeat(np.arange(3), 30)
    model = svm_train(x, y, c=2.0)
    path = tmp_path / "model.svm"
    save_svm_model(path, model)
    back = load_svm_model(path)
    assert (back.classes == model.classes).all()
    assert (back.vectors == model.vectors).all()
    q = rng.dirichlet(np.ones(12), size=40)
    np.testing.assert_array_equal(svm_predict_batch(back, q),
                                  svm_predict_batch(model, q))
    np.testing.assert_allclose(decision_values(back, q),
                               decision_values(model, q), atol=0)


def test_model_file_rejects_corruption(tmp_path, rng):
    x, y = _smo_problem(rng, n=20)
    model = svm_train(x, np.where(y > 0, 0, 1), c=1.0)
    path = tmp_path / "m.svm"
    save_svm_model(path, model)
    blob = path.read_bytes()
    bad = tmp_path / "bad.svm"
    bad.write_bytes(b"WRONG" + blob[5:])
    with pytest.raises(CorruptCache):
        load_svm_model(bad)
    trailing = tmp_path / "trail.svm"
    trailing.write_bytes(blob + b"\x00\x00")
    with pytest.raises(CorruptCache):
        load_svm_model(trailing)
