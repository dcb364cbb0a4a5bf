"""Command-line pipeline driver.

Subcommands share a workspace directory (cache/, vocabs/, results/,
analysis/) guarded by a lockfile so only one command runs per workspace at
a time. Options may come from a key=value config file; command-line flags
win. Exit codes: 0 success, 2 configuration error, 3 data error, 4
convergence failure.
"""

import argparse
import fcntl
import hashlib
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from . import analysis as analysis_mod
from . import cache as cache_io
from .cbow import build_half_region_cbows, build_region_cbows, sum_cbows_by_concept, write_concept_sums_csv
from .dataset import EXCLUDED, load_dataset
from .errors import CacheMiss, ConfigError, ConvergenceError, DataError, ScenebowError
from .evaluation import (
    EXPERIMENT_SETS,
    config_for_set,
    metrics_csv_header,
    metrics_csv_row,
    prepare_inputs,
    run_experiment,
    write_confusion_csv,
    write_run_json,
)
from .grid import LOWER, UPPER
from .pipeline import (
    FEATURE_COMBOS,
    ImageDescriptors,
    build_region_table,
    combo_parts,
    descriptor_stream,
    extract_dataset,
    per_category_descriptors,
    pooled_descriptors,
)
from .rng import derive_seed
from .sift import SiftParams
from .synth import generate_dataset
from .vocabulary import (
    INTEGRATED,
    UNIVERSAL,
    build_half_vocabularies,
    build_integrated,
    build_universal,
    read_vocabulary,
    write_vocabulary,
)

logger = logging.getLogger("scenebow")

VOCAB_KEYS = (
    "universal",
    "integrated",
    "universal_upper",
    "universal_lower",
    "integrated_upper",
    "integrated_lower",
)

_INT_KEYS = {"seed", "k", "set", "count", "size", "folds", "inner_folds",
             "svm_max_iter", "kmeans_max_iter"}
_FLOAT_KEYS = {"svm_tol", "kmeans_tol", "contrast_threshold"}
_BOOL_KEYS = {"force", "strict_folds", "upsample"}


def read_config_file(path) -> dict:
    """key=value lines; blank lines and #-comments ignored."""
    values = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _convert(key: str, value: str):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        return value.lower() in ("1", "true", "yes", "on")
    if key == "c_grid":
        return tuple(float(v) for v in value.split(","))
    return value


def merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill argument values that were not given on the command line from the
    config file, then apply hard defaults."""
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key, raw in file_values.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) in (None, False):
            try:
                setattr(args, key, _convert(key, raw))
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc
    defaults = {"workspace": "workspace", "seed": 0, "k": 200, "folds": 10,
                "inner_folds": 10, "svm_tol": 1e-3, "svm_max_iter": 200_000,
                "kmeans_max_iter": 100, "kmeans_tol": 1e-4, "c_grid": (1.0,),
                "contrast_threshold": 0.03}
    for key, value in defaults.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    return args


@contextmanager
def workspace_lock(workspace: Path):
    workspace.mkdir(parents=True, exist_ok=True)
    with open(workspace / ".lock", "w") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _sift_params(args) -> SiftParams:
    return SiftParams(
        contrast_threshold=args.contrast_threshold,
        upsample=bool(getattr(args, "upsample", False)),
    )


def _require_dataset(args):
    for flag in ("images", "labels", "categories"):
        if getattr(args, flag, None) is None:
            raise ConfigError(f"--{flag} is required for this command")
    return load_dataset(args.images, args.labels, args.categories)


def _load_cached(dataset, params: SiftParams, cache_dir: Path) -> list[ImageDescriptors]:
    """Cache-only load; a missing file is an error pointing at cmd_extract."""
    out = []
    for image in dataset.images:
        path = cache_dir / f"{image.id}.scan"
        if not path.exists():
            raise CacheMiss(
                f"{image.id}: no descriptor cache at {path}; run `scenebow extract` first"
            )
        kps, descs = cache_io.load_descriptor_arrays(path, params)
        out.append(ImageDescriptors(image.id, dataset.categories[image.id],
                                    image.pixels.shape[1], image.pixels.shape[0],
                                    kps, descs))
    return out


def cmd_extract(args) -> int:
    dataset = _require_dataset(args)
    cache_dir = Path(args.workspace) / "cache"
    extracted = extract_dataset(dataset, _sift_params(args), cache_dir,
                                force=bool(args.force))
    total = sum(rec.count for rec in extracted)
    logger.info("extracted %d keypoints over %d images into %s",
                total, len(extracted), cache_dir)
    return 0


def cmd_vocab(args) -> int:
    dataset = _require_dataset(args)
    workspace = Path(args.workspace)
    params = _sift_params(args)
    extracted = _load_cached(dataset, params, workspace / "cache")
    kinds = VOCAB_KEYS if args.kind in (None, "all") else (args.kind.replace("-", "_"),)
    for key in kinds:
        if key not in VOCAB_KEYS:
            raise ConfigError(f"--kind must be one of {', '.join(VOCAB_KEYS)} or all")
    categories = tuple(dataset.category_names)
    out_dir = workspace / "vocabs"
    for key in kinds:
        seed = derive_seed(args.seed, "vocab", key)
        if key == "universal":
            vocab = build_universal(pooled_descriptors(extracted), args.k, seed=seed,
                                    max_iter=args.kmeans_max_iter, tol=args.kmeans_tol)
        elif key == "integrated":
            vocab = build_integrated(per_category_descriptors(extracted), args.k,
                                     seed=seed, categories=categories,
                                     max_iter=args.kmeans_max_iter, tol=args.kmeans_tol)
        else:
            kind, half = key.rsplit("_", 1)
            vocab = build_half_vocabularies(
                descriptor_stream(extracted), half,
                UNIVERSAL if kind == "universal" else INTEGRATED,
                args.k, seed=seed, categories=categories,
                max_iter=args.kmeans_max_iter, tol=args.kmeans_tol)
        path = out_dir / f"{key}.csv"
        write_vocabulary(path, vocab)
        digest = hashlib.blake2b(path.read_bytes(), digest_size=8).hexdigest()
        logger.info("wrote %s (%d words, blake2b %s)", path, vocab.size, digest)
    return 0


def _vocab_keys_for(parts, scope: str) -> list[str]:
    keys = []
    for part in sorted(parts):
        base = "integrated" if part == "IBOW" else "universal"
        if scope == "whole":
            keys.append(base)
        else:
            keys += [f"{base}_{UPPER}", f"{base}_{LOWER}"]
    return keys


def cmd_run(args) -> int:
    if args.set not in EXPERIMENT_SETS:
        raise ConfigError(f"--set must be 1..4, got {args.set}")
    if args.features not in FEATURE_COMBOS:
        raise ConfigError(
            f"--features must be one of: {', '.join(FEATURE_COMBOS)}")
    config = config_for_set(
        args.set, features=args.features, seed=args.seed, folds=args.folds,
        k=args.k, c_grid=tuple(args.c_grid), inner_folds=args.inner_folds,
        svm_tol=args.svm_tol, svm_max_iter=args.svm_max_iter,
        kmeans_max_iter=args.kmeans_max_iter, kmeans_tol=args.kmeans_tol,
        strict_folds=bool(args.strict_folds))

    dataset = _require_dataset(args)
    workspace = Path(args.workspace)
    params = _sift_params(args)
    extracted = _load_cached(dataset, params, workspace / "cache")

    parts = [p for p in combo_parts(config.features) if p in ("IBOW", "UBOW")]
    vocabularies = {}
    for key in _vocab_keys_for(parts, config.scope):
        path = workspace / "vocabs" / f"{key}.csv"
        if not path.exists():
            raise DataError(f"missing vocabulary {path}; run `scenebow vocab` first")
        vocabularies[key] = read_vocabulary(path)

    table = build_region_table(dataset)
    inputs = prepare_inputs(dataset, extracted, table, features=config.features,
                            scopes={config.scope}, k=config.k, seed=config.seed,
                            vocabularies=vocabularies or None)
    result = run_experiment(inputs, config)

    out_dir = workspace / "results" / f"set{args.set}_{args.features.replace('+', '_')}"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_confusion_csv(out_dir / "confusion.csv", result.confusion, inputs.concepts)
    if result.mat_upper is not None:
        write_confusion_csv(out_dir / "confusion_upper.csv", result.mat_upper, inputs.concepts)
        write_confusion_csv(out_dir / "confusion_lower.csv", result.mat_lower, inputs.concepts)
    with open(out_dir / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write(metrics_csv_header(inputs.concepts) + "\n")
        fh.write(metrics_csv_row(config.features, result.metrics) + "\n")
    write_run_json(out_dir / "run.json", result, extra={
        "set": args.set,
        "derived_seeds": {
            "plan_whole": derive_seed(config.seed, "plan", "whole"),
            "plan_upper": derive_seed(config.seed, "plan", "upper"),
            "plan_lower": derive_seed(config.seed, "plan", "lower"),
            "vocab": {k: derive_seed(args.seed, "vocab", k) for k in vocabularies},
        },
    })
    logger.info("set %d %s: overall %.2f%% -> %s",
                args.set, args.features, result.metrics["overall"], out_dir)
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out) if args.out else Path(args.workspace) / "synthetic"
    info = generate_dataset(out, images=args.count or 60, seed=args.seed,
                            size=args.size or 200)
    logger.info("generated %d images under %s", info["count"], out)
    return 0


def cmd_analyze(args) -> int:
    dataset = _require_dataset(args)
    workspace = Path(args.workspace)
    params = _sift_params(args)
    extracted = _load_cached(dataset, params, workspace / "cache")
    out_dir = workspace / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)

    scopes = analysis_mod.standard_scopes(dataset)
    concept_dists = [analysis_mod.concept_distribution(dataset, s) for s in scopes]
    keypoint_dists = [analysis_mod.keypoint_distribution(dataset, extracted, s)
                      for s in scopes]
    analysis_mod.write_distribution_csv(out_dir / "concept_distributions.csv", concept_dists)
    analysis_mod.write_distribution_csv(out_dir / "keypoint_distributions.csv", keypoint_dists)

    rows = []
    for scope, cd, kd in zip(scopes, concept_dists, keypoint_dists):
        try:
            rows.append((f"concepts:{scope}", f"keypoints:{scope}",
                         analysis_mod.correlate(cd, kd)))
        except ScenebowError as exc:
            logger.warning("no correlation for scope %s: %s", scope, exc)
    analysis_mod.write_correlations_csv(out_dir / "correlations.csv", rows)

    _write_concept_sums(dataset, extracted, workspace, out_dir)
    logger.info("analysis CSVs written to %s", out_dir)
    return 0


def _write_concept_sums(dataset, extracted, workspace: Path, out_dir: Path) -> None:
    """Per-concept summed histograms for every vocabulary in the workspace;
    half vocabularies are processed when both halves are present."""
    vocab_dir = workspace / "vocabs"
    loaded = {key: read_vocabulary(vocab_dir / f"{key}.csv")
              for key in VOCAB_KEYS if (vocab_dir / f"{key}.csv").exists()}
    by_image = {rec.image_id: rec for rec in extracted}

    def labels_of(image):
        return [dataset.concepts[l].name if l >= 0 else EXCLUDED for l in image.labels]

    for key, vocab in loaded.items():
        if vocab.half is not None:
            continue
        hists, labels = [], []
        for image in dataset.images:
            rec = by_image[image.id]
            hists += build_region_cbows((rec.width, rec.height),
                                        (rec.keypoints, rec.descriptors),
                                        vocab, image_id=image.id)
            labels += labels_of(image)
        write_concept_sums_csv(out_dir / f"concept_sums_{key}.csv",
                               sum_cbows_by_concept(hists, labels))
    for base in ("universal", "integrated"):
        up, lo = loaded.get(f"{base}_{UPPER}"), loaded.get(f"{base}_{LOWER}")
        if up is None or lo is None:
            continue
        upper_h, upper_l, lower_h, lower_l = [], [], [], []
        for image in dataset.images:
            rec = by_image[image.id]
            hists = build_half_region_cbows((rec.width, rec.height),
                                            (rec.keypoints, rec.descriptors),
                                            up, lo, image_id=image.id)
            labels = labels_of(image)
            upper_h += hists[:50]
            upper_l += labels[:50]
            lower_h += hists[50:]
            lower_l += labels[50:]
        write_concept_sums_csv(out_dir / f"concept_sums_{base}_{UPPER}.csv",
                               sum_cbows_by_concept(upper_h, upper_l))
        write_concept_sums_csv(out_dir / f"concept_sums_{base}_{LOWER}.csv",
                               sum_cbows_by_concept(lower_h, lower_l))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workspace", help="workspace directory (default ./workspace)")
    common.add_argument("--config", help="key=value config file; flags win")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--images", help="directory of dataset images")
    data.add_argument("--labels", help="directory of per-image label files")
    data.add_argument("--categories", help="TSV mapping image id to category")
    data.add_argument("--contrast-threshold", dest="contrast_threshold", type=float)
    data.add_argument("--upsample", action="store_true",
                      help="2x upsample images before detection")

    parser = argparse.ArgumentParser(
        prog="scenebow",
        description="Region-level semantic annotation of natural scene images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common, data],
                       help="detect keypoints and cache descriptors")
    p.add_argument("--force", action="store_true", help="rebuild existing cache files")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("vocab", parents=[common, data],
                       help="build visual vocabularies from the cache")
    p.add_argument("--kind", help="universal|integrated|<kind>_<half>|all")
    p.add_argument("--k", type=int, help="words per vocabulary block (default 200)")
    p.add_argument("--kmeans-max-iter", dest="kmeans_max_iter", type=int)
    p.add_argument("--kmeans-tol", dest="kmeans_tol", type=float)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("run", parents=[common, data],
                       help="run one experiment-grid cell")
    p.add_argument("--set", type=int, required=True,
                   help="1=KNN whole, 2=SVM whole, 3=KNN halves, 4=SVM halves")
    p.add_argument("--features", required=True, help="feature combination name")
    p.add_argument("--k", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--c-grid", dest="c_grid", type=lambda s: tuple(float(v) for v in s.split(",")),
                   help="comma-separated SVM box-constraint candidates")
    p.add_argument("--inner-folds", dest="inner_folds", type=int)
    p.add_argument("--svm-tol", dest="svm_tol", type=float)
    p.add_argument("--svm-max-iter", dest="svm_max_iter", type=int)
    p.add_argument("--kmeans-max-iter", dest="kmeans_max_iter", type=int)
    p.add_argument("--kmeans-tol", dest="kmeans_tol", type=float)
    p.add_argument("--strict-folds", dest="strict_folds", action="store_true",
                   help="rebuild vocabularies from training regions of each fold")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", parents=[common],
                       help="generate the procedural test dataset")
    p.add_argument("--out", help="output directory (default workspace/synthetic)")
    p.add_argument("--count", type=int, help="number of images (default 60)")
    p.add_argument("--size", type=int, help="image side in pixels (default 200)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", parents=[common, data],
                       help="distribution, correlation and concept-sum CSVs")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args = merge_config(args)
        with workspace_lock(Path(args.workspace)):
            return args.func(args)
    except (ConfigError, ValueError) as exc:
        logger.error("%s", exc)
        return 2
    except ConvergenceError as exc:
        logger.error("solver did not converge: %s", exc)
        return 4
    except (DataError, ScenebowError, OSError) as exc:
        logger.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
