"""Cross-validated region annotation experiments.

Regions are dealt into stratified folds; each fold is tested once with the
other nine as training data, and one confusion matrix accumulates over the
folds. Half-based experiments run independent fold loops over upper and
lower regions and sum the two matrices. Four experiment sets pair the two
classifiers with whole-image or half-based vocabularies; each runs any of
the 14 feature combinations.
"""

import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .annotators import build_prototypes, knn_annotate_batch, svm_predict_batch, svm_train
from .errors import ConceptTooSmall, EmptyMatrix
from .grid import LOWER, REGIONS_PER_IMAGE, UPPER, regions_of_points
from .pipeline import (
    RegionTable,
    assemble_features,
    build_cbow_matrix,
    build_half_cbow_matrix,
    combo_parts,
    descriptor_stream,
    per_category_descriptors,
    pooled_descriptors,
)
from .rng import derive_seed
from .svm import select_C
from .vocabulary import (
    INTEGRATED,
    UNIVERSAL,
    Vocabulary,
    build_half_vocabularies,
    build_integrated,
    build_universal,
)

EXPERIMENT_SETS = {
    1: ("knn", "whole"),
    2: ("svm", "whole"),
    3: ("knn", "halves"),
    4: ("svm", "halves"),
}

_PART_KIND = {"UBOW": UNIVERSAL, "IBOW": INTEGRATED}


@dataclass
class FoldPlan:
    """Disjoint test folds of labeled region rows; their union covers every
    labeled region exactly once."""

    folds: list[np.ndarray]
    seed: int
    stratified: bool

    def train_rows(self, f: int) -> np.ndarray:
        rest = [rows for i, rows in enumerate(self.folds) if i != f]
        return np.sort(np.concatenate(rest))


def make_folds(labels: np.ndarray, folds: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified-by-concept partition of labeled rows (label >= 0) into
    near-equal folds. Falls back to an unstratified partition with a warning
    when some concept has fewer samples than folds."""
    labels = np.asarray(labels)
    labeled = np.flatnonzero(labels >= 0)
    if len(labeled) < folds:
        raise ConceptTooSmall(f"{len(labeled)} labeled regions cannot fill {folds} folds")
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    concepts, counts = np.unique(labels[labeled], return_counts=True)
    stratified = bool((counts >= folds).all())

    fold_of = np.empty(len(labeled), dtype=np.int64)
    pos_of = {row: i for i, row in enumerate(labeled)}
    if stratified:
        offset = 0
        for c in concepts:
            rows = np.flatnonzero(labels == c)
            rng.shuffle(rows)
            for i, row in enumerate(rows):
                fold_of[pos_of[row]] = (i + offset) % folds
            offset = (offset + len(rows)) % folds
    else:
        small = concepts[counts < folds]
        warnings.warn(
            f"concepts {small.tolist()} have fewer than {folds} samples; "
            "using unstratified folds",
            stacklevel=2,
        )
        order = labeled.copy()
        rng.shuffle(order)
        for i, row in enumerate(order):
            fold_of[pos_of[row]] = i % folds
    plan = [np.sort(labeled[fold_of == f]) for f in range(folds)]
    return FoldPlan(plan, seed, stratified)


@dataclass
class ConfusionMatrix:
    """Rows = true concept index, columns = predicted."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def overall_accuracy(self) -> float:
        if self.total == 0:
            raise EmptyMatrix("no evaluated regions")
        return float(np.trace(self.counts)) / self.total

    def per_concept_accuracy(self) -> np.ndarray:
        row_sums = self.counts.sum(axis=1)
        diag = np.diagonal(self.counts).astype(np.float64)
        return np.divide(diag, row_sums, out=np.zeros_like(diag), where=row_sums > 0)

    def macro_accuracy(self) -> float:
        row_sums = self.counts.sum(axis=1)
        if not (row_sums > 0).any():
            raise EmptyMatrix("no evaluated regions")
        return float(self.per_concept_accuracy()[row_sums > 0].mean())


@dataclass
class ExperimentConfig:
    """One cell of the experiment grid."""

    features: str = "IBOW"
    classifier: str = "svm"      # "knn" | "svm"
    scope: str = "whole"         # "whole" | "halves"
    seed: int = 0
    folds: int = 10
    k: int = 200                 # words per vocabulary block
    c_grid: tuple = (1.0,)
    inner_folds: int = 10        # folds of the box-constraint selection CV
    svm_tol: float = 1e-3
    svm_max_iter: int = 200_000
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-4
    strict_folds: bool = False   # rebuild vocabularies inside each fold

    def __post_init__(self):
        combo_parts(self.features)
        if self.classifier not in ("knn", "svm"):
            raise ValueError(f"classifier must be knn or svm, got {self.classifier!r}")
        if self.scope not in ("whole", "halves"):
            raise ValueError(f"scope must be whole or halves, got {self.scope!r}")
        if self.folds < 2:
            raise ValueError(f"cross-validation needs at least 2 folds, got {self.folds}")


def config_for_set(set_number: int, **kwargs) -> ExperimentConfig:
    if set_number not in EXPERIMENT_SETS:
        raise ValueError(f"experiment set must be 1..4, got {set_number}")
    classifier, scope = EXPERIMENT_SETS[set_number]
    return ExperimentConfig(classifier=classifier, scope=scope, **kwargs)


@dataclass
class ExperimentInputs:
    """Prepared matrices shared by every combination of one experiment run."""

    table: RegionTable
    concepts: list[str]
    extracted: list
    bows_whole: dict[str, np.ndarray] = field(default_factory=dict)
    bows_upper: dict[str, np.ndarray] = field(default_factory=dict)
    bows_lower: dict[str, np.ndarray] = field(default_factory=dict)
    vocabularies: dict[str, Vocabulary] = field(default_factory=dict)


def bow_parts_needed(features) -> set[str]:
    needed = set()
    for combo in ([features] if isinstance(features, str) else features):
        needed.update(p for p in combo_parts(combo) if p in _PART_KIND)
    return needed


def build_vocabularies(
    extracted,
    parts: set[str],
    scopes: set[str],
    k: int,
    seed: int,
    categories: tuple[str, ...],
    max_iter: int = 100,
    tol: float = 1e-4,
) -> dict[str, Vocabulary]:
    """The vocabulary set needed for the requested bag parts and scopes,
    keyed "universal", "integrated", "universal_upper", etc."""
    vocabs: dict[str, Vocabulary] = {}
    for part in sorted(parts):
        kind = _PART_KIND[part]
        key = kind.lower()
        if "whole" in scopes and key not in vocabs:
            if kind == UNIVERSAL:
                vocabs[key] = build_universal(
                    pooled_descriptors(extracted), k,
                    seed=derive_seed(seed, "vocab", key), max_iter=max_iter, tol=tol)
            else:
                vocabs[key] = build_integrated(
                    per_category_descriptors(extracted), k,
                    seed=derive_seed(seed, "vocab", key),
                    categories=categories, max_iter=max_iter, tol=tol)
        if "halves" in scopes:
            for half in (UPPER, LOWER):
                hkey = f"{key}_{half}"
                if hkey not in vocabs:
                    vocabs[hkey] = build_half_vocabularies(
                        descriptor_stream(extracted), half, kind, k,
                        seed=derive_seed(seed, "vocab", hkey),
                        categories=categories, max_iter=max_iter, tol=tol)
    return vocabs


def prepare_inputs(
    dataset,
    extracted,
    table: RegionTable,
    features="IBOW+ColHist+Wav",
    scopes: set[str] = frozenset({"whole"}),
    k: int = 200,
    seed: int = 0,
    kmeans_max_iter: int = 100,
    kmeans_tol: float = 1e-4,
    vocabularies: dict[str, Vocabulary] | None = None,
) -> ExperimentInputs:
    """Build (or accept prebuilt) vocabularies and the bag matrices needed to
    run the given feature combination(s) over the given scopes."""
    parts = bow_parts_needed(features)
    if vocabularies is None:
        vocabularies = build_vocabularies(
            extracted, parts, set(scopes), k, seed,
            categories=tuple(dataset.category_names),
            max_iter=kmeans_max_iter, tol=kmeans_tol)
    inputs = ExperimentInputs(table, list(dataset.concepts), extracted,
                              vocabularies=vocabularies)
    for part in sorted(parts):
        key = _PART_KIND[part].lower()
        if "whole" in scopes:
            inputs.bows_whole[part] = build_cbow_matrix(extracted, vocabularies[key])
        if "halves" in scopes:
            up, lo = build_half_cbow_matrix(
                extracted, vocabularies[f"{key}_{UPPER}"], vocabularies[f"{key}_{LOWER}"])
            inputs.bows_upper[part] = up
            inputs.bows_lower[part] = lo
    return inputs


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    confusion: ConfusionMatrix
    metrics: dict
    chosen_c: list[float] = field(default_factory=list)
    mat_upper: ConfusionMatrix | None = None
    mat_lower: ConfusionMatrix | None = None
    elapsed_s: float = 0.0


def _classify_fold(x_train, y_train, x_test, config: ExperimentConfig, fold_seed: int):
    if config.classifier == "knn":
        prototypes = build_prototypes(x_train, y_train)
        return knn_annotate_batch(x_test, prototypes), None
    grid = tuple(config.c_grid)
    c = grid[0] if len(grid) == 1 else select_C(
        x_train, y_train, grid, folds=config.inner_folds, seed=fold_seed,
        tol=config.svm_tol, max_iter=config.svm_max_iter)
    model = svm_train(x_train, y_train, c=c,
                      tol=config.svm_tol, max_iter=config.svm_max_iter)
    return svm_predict_batch(model, x_test), c


def _strict_fold_bows(inputs: ExperimentInputs, parts, train_rows, config,
                      scope_tag: str, fold: int, half: str | None = None):
    """Vocabularies rebuilt from keypoints of training regions only, then
    bag matrices for all rows against those fold-local vocabularies."""
    train_mask = np.zeros(len(inputs.table), dtype=bool)
    train_mask[train_rows] = True
    filtered = []
    for i, rec in enumerate(inputs.extracted):
        if len(rec.keypoints) == 0:
            filtered.append(rec)
            continue
        regions = regions_of_points(rec.keypoints[:, 0], rec.keypoints[:, 1],
                                    rec.width, rec.height)
        keep = train_mask[i * REGIONS_PER_IMAGE + regions]
        filtered.append(type(rec)(rec.image_id, rec.category, rec.width, rec.height,
                                  rec.keypoints[keep], rec.descriptors[keep]))
    bow_parts = {p for p in parts if p in _PART_KIND}
    seed = derive_seed(config.seed, "strict-vocab", scope_tag, fold)
    categories = tuple(sorted(set(inputs.table.categories)))
    scope = "halves" if half else "whole"
    vocabs = build_vocabularies(filtered, bow_parts, {scope}, config.k, seed,
                                categories, config.kmeans_max_iter, config.kmeans_tol)
    bows = {}
    for part in bow_parts:
        key = _PART_KIND[part].lower()
        if half is None:
            bows[part] = build_cbow_matrix(inputs.extracted, vocabs[key])
        else:
            up, lo = build_half_cbow_matrix(inputs.extracted,
                                            vocabs[f"{key}_{UPPER}"],
                                            vocabs[f"{key}_{LOWER}"])
            bows[part] = up if half == UPPER else lo
    return bows


def _run_cv(inputs: ExperimentInputs, config: ExperimentConfig, rows_mask,
            bows: dict[str, np.ndarray], scope_tag: str, half: str | None = None):
    """One 10-fold loop over the rows selected by rows_mask."""
    table = inputs.table
    labels = np.where(rows_mask, table.labels, -1)
    plan = make_folds(labels, config.folds, derive_seed(config.seed, "plan", scope_tag))
    n = len(inputs.concepts)
    counts = np.zeros((n, n), dtype=np.int64)
    parts = combo_parts(config.features)
    normalize = config.classifier == "svm"
    chosen = []
    for f, test_rows in enumerate(plan.folds):
        train_rows = plan.train_rows(f)
        fold_bows = bows
        if config.strict_folds and any(p in _PART_KIND for p in parts):
            fold_bows = _strict_fold_bows(inputs, parts, train_rows, config,
                                          scope_tag, f, half)
        x_train = assemble_features(parts, table, fold_bows, train_rows, normalize)
        x_test = assemble_features(parts, table, fold_bows, test_rows, normalize)
        preds, c = _classify_fold(x_train, labels[train_rows], x_test, config,
                                  derive_seed(config.seed, "innercv", scope_tag, f))
        if c is not None:
            chosen.append(c)
        np.add.at(counts, (labels[test_rows], preds), 1)
    return ConfusionMatrix(counts), chosen


def run_experiment(inputs: ExperimentInputs, config: ExperimentConfig) -> ExperimentResult:
    """Run one grid cell; dispatches to the half-based protocol when the
    config's scope is halves."""
    if config.scope == "halves":
        return run_halves_experiment(inputs, config)
    start = time.perf_counter()
    mask = np.ones(len(inputs.table), dtype=bool)
    confusion, chosen = _run_cv(inputs, config, mask, inputs.bows_whole, "whole")
    metrics = report(confusion, inputs.concepts)
    return ExperimentResult(config, confusion, metrics, chosen,
                            elapsed_s=time.perf_counter() - start)


def run_halves_experiment(inputs: ExperimentInputs, config: ExperimentConfig) -> ExperimentResult:
    """Independent fold loops over upper and lower regions; the reported
    matrix is the element-wise sum of the two half matrices."""
    if config.scope != "halves":
        raise ValueError("config.scope must be 'halves'")
    start = time.perf_counter()
    upper_mask = inputs.table.region_index < 50
    mat_upper, chosen_up = _run_cv(inputs, config, upper_mask,
                                   inputs.bows_upper, "upper", half=UPPER)
    mat_lower, chosen_lo = _run_cv(inputs, config, ~upper_mask,
                                   inputs.bows_lower, "lower", half=LOWER)
    combined = mat_upper + mat_lower
    metrics = report(combined, inputs.concepts)
    return ExperimentResult(config, combined, metrics, chosen_up + chosen_lo,
                            mat_upper=mat_upper, mat_lower=mat_lower,
                            elapsed_s=time.perf_counter() - start)


def concept_names(concepts) -> list[str]:
    """Plain name strings whether given ConceptId objects or strings."""
    return [getattr(c, "name", c) for c in concepts]


def report(matrix: ConfusionMatrix, concepts) -> dict:
    """Per-concept percentages (row-normalized diagonal), overall percentage
    (trace over total), and the macro average. Keys are concept names."""
    names = concept_names(concepts)
    if matrix.total == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    per = matrix.per_concept_accuracy() * 100.0
    return {
        "per_concept": {c: float(p) for c, p in zip(names, per)},
        "overall": matrix.overall_accuracy() * 100.0,
        "macro": matrix.macro_accuracy() * 100.0,
    }


def metrics_csv_header(concepts) -> str:
    names = [c.capitalize() for c in concept_names(concepts)]
    return ",".join(["Features"] + names + ["Acc."])


def metrics_csv_row(name: str, metrics: dict) -> str:
    cells = [f"{v:.2f}" for v in metrics["per_concept"].values()]
    return ",".join([name] + cells + [f"{metrics['overall']:.2f}"])


def write_confusion_csv(path, matrix: ConfusionMatrix, concepts) -> None:
    names = concept_names(concepts)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("," + ",".join(names) + "\n")
        for name, row in zip(names, matrix.counts):
            fh.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")


def write_metrics_csv(path, name: str, metrics: dict, concepts) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(metrics_csv_header(concepts) + "\n")
        fh.write(metrics_csv_row(name, metrics) + "\n")


def write_run_json(path, result: ExperimentResult, extra: dict | None = None) -> None:
    payload = {
        "config": asdict(result.config),
        "metrics": result.metrics,
        "chosen_c": result.chosen_c,
        "elapsed_s": result.elapsed_s,
        "confusion_total": result.confusion.total,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=float)
        fh.write("\n")
