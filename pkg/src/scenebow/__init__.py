"""Region-level semantic annotation of natural scene images.

Images are divided into a fixed 10x10 grid of regions; each region is
described by bag-of-visual-words histograms over one of four vocabulary
kinds, optionally fused with color histogram, color moment and wavelet
texture features, and annotated with a local semantic concept by either a
nearest-prototype classifier or a histogram-intersection-kernel SVM,
evaluated with stratified 10-fold cross validation.
"""

from .analysis import concept_distribution, correlate, keypoint_distribution
from .annotators import (
    SemanticPrototype,
    build_prototypes,
    hik,
    knn_annotate,
    knn_annotate_batch,
    select_C,
    svm_predict,
    svm_predict_batch,
    svm_train,
)
from .cbow import (
    CbowHistogram,
    build_half_region_cbows,
    build_region_cbows,
    sum_cbows_by_concept,
)
from .dataset import (
    EXCLUDED,
    NATURAL_SCENE_CONCEPTS,
    Dataset,
    LabeledImage,
    concept_census,
    load_dataset,
)
from .errors import ScenebowError
from .evaluation import (
    ConfusionMatrix,
    ExperimentConfig,
    FoldPlan,
    config_for_set,
    make_folds,
    prepare_inputs,
    report,
    run_experiment,
    run_halves_experiment,
)
from .features import (
    FeatureVector,
    color_histogram,
    color_moments,
    concat_features,
    dwt_texture,
    rgb_to_hsv,
)
from .grid import RegionRect, grid_regions, half_of_region, region_of_point
from .pipeline import (
    FEATURE_COMBOS,
    ImageDescriptors,
    build_region_table,
    extract_dataset,
)
from .sift import Keypoint, SiftParams, describe, detect, detect_and_describe
from .synth import generate_dataset, synth_dataset
from .vocabulary import (
    Vocabulary,
    build_half_vocabularies,
    build_integrated,
    build_universal,
    kmeans,
    quantize,
    read_vocabulary,
    write_vocabulary,
)

__version__ = "0.1.0"

__all__ = [
    "CbowHistogram",
    "ConfusionMatrix",
    "Dataset",
    "EXCLUDED",
    "ExperimentConfig",
    "FEATURE_COMBOS",
    "FeatureVector",
    "FoldPlan",
    "ImageDescriptors",
    "Keypoint",
    "LabeledImage",
    "NATURAL_SCENE_CONCEPTS",
    "RegionRect",
    "ScenebowError",
    "SemanticPrototype",
    "SiftParams",
    "Vocabulary",
    "build_half_region_cbows",
    "build_half_vocabularies",
    "build_integrated",
    "build_prototypes",
    "build_region_cbows",
    "build_region_table",
    "build_universal",
    "color_histogram",
    "color_moments",
    "concat_features",
    "concept_census",
    "concept_distribution",
    "config_for_set",
    "correlate",
    "describe",
    "detect",
    "detect_and_describe",
    "dwt_texture",
    "extract_dataset",
    "generate_dataset",
    "grid_regions",
    "half_of_region",
    "hik",
    "keypoint_distribution",
    "kmeans",
    "knn_annotate",
    "knn_annotate_batch",
    "load_dataset",
    "make_folds",
    "prepare_inputs",
    "quantize",
    "read_vocabulary",
    "region_of_point",
    "report",
    "rgb_to_hsv",
    "run_experiment",
    "run_halves_experiment",
    "select_C",
    "sum_cbows_by_concept",
    "svm_predict",
    "svm_predict_batch",
    "svm_train",
    "synth_dataset",
    "write_vocabulary",
]
