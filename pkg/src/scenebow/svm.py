"""Soft-margin SVMs with the histogram-intersection kernel.

Binary problems are solved in the dual by sequential minimal optimization
with maximal-violating-pair working-set selection; multiclass decisions use
one-vs-one majority voting. Kernel values come from a full Gram matrix when
the problem is small enough, otherwise from an LRU row cache.
"""

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptCache, DimensionMismatch, NonConvergence, SingleClass
from .rng import derive_seed

try:
    import numba

    # the builtin threading layer never probes TBB/OpenMP versions, so the
    # import stays quiet on machines with older runtimes
    numba.config.THREADING_LAYER = "workqueue"

    @numba.njit(parallel=True, cache=True)
    def _hik_gram_jit(a, b):  # pragma: no cover - compiled
        n, d = a.shape
        m = b.shape[0]
        out = np.empty((n, m))
        for i in numba.prange(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    s += min(a[i, k], b[j, k])
                out[i, j] = s
        return out

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

DEFAULT_C_GRID = tuple(2.0**p for p in range(-3, 8))
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 200_000
FULL_GRAM_LIMIT = 6000  # full Gram kept when training size is at most this
MODEL_MAGIC = b"SVMH1"


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def hik(a, b) -> float:
    """Histogram-intersection kernel: sum of elementwise minima."""
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"lengths {a.shape} vs {b.shape}")
    return float(np.minimum(a, b).sum())


def hik_gram(a: np.ndarray, b: np.ndarray, chunk: int = 256) -> np.ndarray:
    """(n, m) kernel matrix between row sets a and b."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"feature widths {a.shape[1]} vs {b.shape[1]}")
    if _HAVE_NUMBA:
        return _hik_gram_jit(a, b)
    out = np.empty((len(a), len(b)))
    for lo in range(0, len(a), chunk):
        hi = min(lo + chunk, len(a))
        out[lo:hi] = np.minimum(a[lo:hi, None, :], b[None, :, :]).sum(axis=2)
    return out


class KernelCache:
    """Row-on-demand HIK Gram of one training matrix: precomputed in full for
    small problems, else an LRU cache of rows."""

    def __init__(self, x: np.ndarray, full_limit: int = FULL_GRAM_LIMIT, max_rows: int = 1024):
        self.x = np.ascontiguousarray(x, dtype=np.float64)
        self.n = len(x)
        self._full = hik_gram(self.x, self.x) if self.n <= full_limit else None
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self._max_rows = max_rows

    def row(self, i: int) -> np.ndarray:
        if self._full is not None:
            return self._full[i]
        cached = self._rows.get(i)
        if cached is not None:
            self._rows.move_to_end(i)
            return cached
        row = hik_gram(self.x[i : i + 1], self.x)[0]
        self._rows[i] = row
        if len(self._rows) > self._max_rows:
            self._rows.popitem(last=False)
        return row

    def diagonal(self) -> np.ndarray:
        if self._full is not None:
            return np.diagonal(self._full).copy()
        return self.x.sum(axis=1)  # min(v, v) = v


def _smo(kernel: KernelCache, y: np.ndarray, c: float, tol: float, max_iter: int):
    """Maximal-violating-pair SMO on one binary problem.

    Returns (alpha, bias, residual, objective trace). The trace is the dual
    objective after each update and is non-decreasing.
    """
    n = kernel.n
    alpha = np.zeros(n)
    g = np.zeros(n)  # sum_j alpha_j y_j K_ij
    diag = kernel.diagonal()
    objective: list[float] = []
    residual = np.inf
    snap = 1e-12 * max(1.0, c)

    for _ in range(max_iter):
        f = g - y
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not up.any() or not low.any():
            residual = 0.0
            break
        f_up = np.where(up, f, np.inf)
        f_low = np.where(low, f, -np.inf)
        q = int(np.argmin(f_up))
        p = int(np.argmax(f_low))
        residual = float(f[p] - f[q])
        if residual <= tol:
            break

        k_p = kernel.row(p)
        k_q = kernel.row(q)
        eta = max(diag[p] + diag[q] - 2.0 * k_p[q], 1e-12)
        if y[p] != y[q]:
            lo_bound = max(0.0, alpha[q] - alpha[p])
            hi_bound = min(c, c + alpha[q] - alpha[p])
        else:
            lo_bound = max(0.0, alpha[q] + alpha[p] - c)
            hi_bound = min(c, alpha[q] + alpha[p])
        new_q = float(np.clip(alpha[q] + y[q] * residual / eta, lo_bound, hi_bound))
        # snap to exact bounds: rounding dust strands variables in the index
        # sets with a movable range below one ulp, which cycles forever
        if new_q <= snap:
            new_q = 0.0
        elif new_q >= c - snap:
            new_q = c
        delta_q = new_q - alpha[q]
        new_p = alpha[p] - y[p] * y[q] * delta_q
        if new_p <= snap:
            new_p = 0.0
        elif new_p >= c - snap:
            new_p = c
        delta_p = new_p - alpha[p]
        alpha[q] = new_q
        alpha[p] = new_p
        g += delta_p * y[p] * k_p + delta_q * y[q] * k_q
        objective.append(float(alpha.sum() - 0.5 * (alpha * y * g).sum()))
    else:
        raise NonConvergence(residual, tol, max_iter)

    f = g - y
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
    candidates = []
    if up.any():
        candidates.append(f[up].min())
    if low.any():
        candidates.append(f[low].max())
    bias = -float(np.mean(candidates)) if candidates else 0.0
    return alpha, bias, residual, objective


@dataclass
class BinarySvm:
    """One pairwise classifier: decision > 0 votes pos_class."""

    pos_class: int
    neg_class: int
    support: np.ndarray  # indices into the model's vector block
    coef: np.ndarray     # alpha_i * y_i for each support vector
    bias: float
    c: float


@dataclass
class SvmModel:
    classes: np.ndarray
    vectors: np.ndarray
    pairs: list[BinarySvm]
    kernel: str = "hik"
    diagnostics: list[dict] = field(default_factory=list, repr=False)


def svm_train(
    features: np.ndarray,
    labels: np.ndarray,
    c: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    full_gram_limit: int = FULL_GRAM_LIMIT,
) -> SvmModel:
    """One-vs-one HIK SVMs over all class pairs."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise SingleClass(f"need at least 2 classes, got {classes.tolist()}")

    pair_specs = []
    support_union: set[int] = set()
    diagnostics = []
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            pos, neg = classes[ai], classes[bi]
            mask = (labels == pos) | (labels == neg)
            idx = np.flatnonzero(mask)
            y = np.where(labels[idx] == pos, 1.0, -1.0)
            kernel = KernelCache(features[idx], full_limit=full_gram_limit)
            alpha, bias, residual, trace = _smo(kernel, y, c, tol, max_iter)
            sv_local = np.flatnonzero(alpha > 1e-12)
            sv_global = idx[sv_local]
            support_union.update(int(i) for i in sv_global)
            pair_specs.append(
                (int(pos), int(neg), sv_global, alpha[sv_local] * y[sv_local], bias)
            )
            diagnostics.append(
                {"pair": (int(pos), int(neg)), "residual": residual,
                 "iterations": len(trace), "objective": trace}
            )

    block = np.array(sorted(support_union), dtype=np.int64)
    remap = {int(g): i for i, g in enumerate(block)}
    vectors = features[block] if len(block) else features[:0]
    pairs = [
        BinarySvm(pos, neg,
                  np.array([remap[int(g)] for g in sv], dtype=np.int64),
                  np.asarray(coef, dtype=np.float64), float(bias), float(c))
        for pos, neg, sv, coef, bias in pair_specs
    ]
    return SvmModel(classes.astype(np.int64), vectors, pairs, diagnostics=diagnostics)


def decision_values(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """(n_probe, n_pairs) pairwise decision function values."""
    features = np.atleast_2d(np.ascontiguousarray(features, dtype=np.float64))
    if features.shape[1] != model.vectors.shape[1]:
        raise DimensionMismatch(
            f"probe width {features.shape[1]} vs model {model.vectors.shape[1]}"
        )
    gram = hik_gram(features, model.vectors) if len(model.vectors) else np.zeros((len(features), 0))
    out = np.empty((len(features), len(model.pairs)))
    for k, pair in enumerate(model.pairs):
        out[:, k] = gram[:, pair.support] @ pair.coef + pair.bias
    return out


def svm_predict_batch(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """Majority vote over pairwise decisions; ties go to the class with the
    larger summed signed margin, then to the lowest class index."""
    values = decision_values(model, features)
    n = len(values)
    class_pos = {int(c): i for i, c in enumerate(model.classes)}
    votes = np.zeros((n, len(model.classes)), dtype=np.int64)
    margins = np.zeros((n, len(model.classes)))
    for k, pair in enumerate(model.pairs):
        f = values[:, k]
        pos, neg = class_pos[pair.pos_class], class_pos[pair.neg_class]
        # pairs are built with pos < neg, so a zero decision votes low index
        votes[np.arange(n), np.where(f >= 0, pos, neg)] += 1
        margins[:, pos] += f
        margins[:, neg] -= f
    return np.array(
        [model.classes[_best(votes[i], margins[i])] for i in range(n)], dtype=np.int64
    )


def _best(votes: np.ndarray, margins: np.ndarray) -> int:
    top = np.flatnonzero(votes == votes.max())
    if len(top) > 1:
        top = top[margins[top] == margins[top].max()]
    return int(top[0])  # classes sorted ascending, so first = lowest index


def svm_predict(model: SvmModel, feature) -> int:
    return int(svm_predict_batch(model, _values(feature)[None, :])[0])


def _stratified_folds(labels: np.ndarray, folds: int, rng: np.random.Generator):
    """Fold index per sample, near-equal per class; classes smaller than the
    fold count spread round-robin (inner model selection only)."""
    fold_of = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        fold_of[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return fold_of


def select_C(
    features: np.ndarray,
    labels: np.ndarray,
    grid=DEFAULT_C_GRID,
    folds: int = 10,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Box-constraint value maximizing mean stratified inner-CV accuracy;
    ties resolved toward the smallest candidate."""
    grid = sorted(float(c) for c in grid)
    if not grid:
        raise ValueError("empty C grid")
    if len(grid) == 1:
        return grid[0]
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    rng = np.random.default_rng(derive_seed(seed, "select_C"))
    fold_of = _stratified_folds(labels, folds, rng)

    best_c, best_acc = grid[0], -1.0
    for c in grid:
        correct = 0
        total = 0
        for f in range(folds):
            test = fold_of == f
            if not test.any() or len(np.unique(labels[~test])) < 2:
                continue
            model = svm_train(features[~test], labels[~test], c=c, tol=tol, max_iter=max_iter)
            pred = svm_predict_batch(model, features[test])
            correct += int((pred == labels[test]).sum())
            total += int(test.sum())
        acc = correct / total if total else 0.0
        if acc > best_acc:
            best_c, best_acc = c, acc
    return best_c


# -- model files ---------------------------------------------------------------


def save_svm_model(path, model: SvmModel) -> None:
    """Versioned little-endian binary: magic, classes, an embedded support-
    vector block, then per-pair indices, coefficients, bias and C."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(model.classes)))
        fh.write(np.asarray(model.classes, dtype="<i8").tobytes())
        fh.write(struct.pack("<II", *model.vectors.shape))
        fh.write(np.ascontiguousarray(model.vectors, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(model.pairs)))
        for pair in model.pairs:
            fh.write(struct.pack("<qqddI", pair.pos_class, pair.neg_class,
                                 pair.c, pair.bias, len(pair.support)))
            fh.write(np.asarray(pair.support, dtype="<i8").tobytes())
            fh.write(np.asarray(pair.coef, dtype="<f8").tobytes())


def load_svm_model(path) -> SvmModel:
    blob = Path(path).read_bytes()
    if blob[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise CorruptCache(f"{path}: not a model file")
    off = len(MODEL_MAGIC)

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, blob, off)
        off += struct.calcsize(fmt)
        return vals

    def take_array(dtype, count):
        nonlocal off
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    (n_classes,) = take("<I")
    classes = take_array("<i8", n_classes).copy()
    n_vec, dim = take("<II")
    vectors = take_array("<f8", n_vec * dim).reshape(n_vec, dim).copy()
    (n_pairs,) = take("<I")
    pairs = []
    for _ in range(n_pairs):
        pos, neg, c, bias, n_sv = take("<qqddI")
        support = take_array("<i8", n_sv).copy()
        coef = take_array("<f8", n_sv).copy()
        pairs.append(BinarySvm(int(pos), int(neg), support, coef, float(bias), float(c)))
    if off != len(blob):
        raise CorruptCache(f"{path}: {len(blob) - off} trailing bytes")
    return SvmModel(classes, vectors, pairs)
