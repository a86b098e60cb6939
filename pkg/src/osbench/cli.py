"""Command-line harness tying the pipeline together.

Subcommands::

    synth      generate a synthetic benchmark (manifests + features)
    extract    turn raw image dumps into a feature file + manifest
    split      build a training-protocol plan from a manifest
    train      grid-search a classifier on a plan, save model + log
    evaluate   score model(s) on a test manifest, write report (+ figure)
    fuse       rank ensemble combinations from prediction dumps
    grid       export a 2-D decision-grid scan of a model (+ figure)

Data goes to files, logs to stderr.  Exit codes: 0 success, 2 bad input or
usage, 1 runtime failure.  ``OSBENCH_SEED`` supplies the default seed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .classifiers import (
    ClassifierSpec,
    VARIANTS,
    export_decision_grid,
    load_model,
    save_model,
)
from .data import UNKNOWN_NAME, align_to_registry, load_manifest, save_manifest, Dataset
from .errors import OsbenchError, OsbenchInputError
from .evaluation import evaluate_models
from .features import (
    CooccurrenceConfig,
    PatchSpec,
    extract_features,
    extract_patches,
    read_image_dump,
)
from .fusion import enumerate_ensembles
from .metrics import na as metric_na
from .metrics import confusion_from_indices
from .protocols import make_plan, load_plan, save_plan, with_manifests
from .report import (
    format_report,
    read_predictions,
    render_confusion_figure,
    render_fusion_figure,
    render_grid_figure,
    write_predictions,
)
from .search import default_grid, grid_search, parse_grid_file, save_search_log
from .synth import make_benchmark, write_benchmark

log = logging.getLogger("osbench")


def _default_seed() -> int:
    return int(os.environ.get("OSBENCH_SEED", "0"))


def _figure_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".png"


# -- subcommand implementations -------------------------------------------


def cmd_synth(args) -> int:
    bench = make_benchmark(
        n_known=args.n_known,
        n_unknown=args.n_unknown,
        images_per_class=args.images_per_class,
        patches_per_image=args.patches_per_image,
        dim=args.dim,
        separation=args.separation,
        seed=args.seed,
    )
    paths = write_benchmark(bench, args.out, fmt=args.format)
    for name in sorted(paths):
        log.info("wrote %s", paths[name])
    return 0


def _iter_image_files(images_dir: str):
    """Yield (class_name, path); top-level dumps count as unknown."""
    if not os.path.isdir(images_dir):
        raise OsbenchInputError(f"not a directory: {images_dir}")
    found = False
    for entry in sorted(os.listdir(images_dir)):
        full = os.path.join(images_dir, entry)
        if os.path.isdir(full):
            for fname in sorted(os.listdir(full)):
                if fname.endswith(".osim"):
                    found = True
                    yield entry, os.path.join(full, fname)
        elif entry.endswith(".osim"):
            found = True
            yield UNKNOWN_NAME, full
    if not found:
        raise OsbenchInputError(f"no .osim image dumps under {images_dir}")


def cmd_extract(args) -> int:
    spec = PatchSpec(size=args.patch_size, count=args.patch_count)
    config = CooccurrenceConfig(
        quantization_step=args.quant,
        truncation=args.truncation,
        order=args.order,
        cross_channel=args.cross_channel,
    )
    feats = []
    labels = []
    image_ids = []
    patch_idx = []
    names: set[str] = set()
    for class_name, path in _iter_image_files(args.images):
        image = read_image_dump(path)
        stem = os.path.splitext(os.path.basename(path))[0]
        image_id = f"{class_name}_{stem}" if class_name != UNKNOWN_NAME else stem
        for p, patch in enumerate(extract_patches(image, spec, args.seed)):
            feats.append(extract_features(patch, config))
            labels.append(class_name)
            image_ids.append(image_id)
            patch_idx.append(p)
        if class_name != UNKNOWN_NAME:
            names.add(class_name)
    registry = {i: n for i, n in enumerate(sorted(names))}
    id_of = {n: i for i, n in registry.items()}
    from .data import Label, UNKNOWN

    dataset = Dataset(
        np.asarray(feats, dtype=np.float32),
        [UNKNOWN if n == UNKNOWN_NAME else Label(id_of[n]) for n in labels],
        image_ids,
        patch_idx,
        registry,
    )
    save_manifest(dataset, args.out_manifest, args.out_features, fmt=args.format)
    log.info("extracted %d patches from %s", len(dataset), args.images)
    return 0


def cmd_split(args) -> int:
    train = load_manifest(args.manifest)
    extra = load_manifest(args.extra_ku) if args.extra_ku else None
    if args.protocol == "netopen" and extra is None:
        raise OsbenchInputError("--protocol netopen requires --extra-ku")
    for rep in range(args.repeats):
        plan = make_plan(
            args.protocol, train, extra, val_fraction=args.val_fraction, seed=args.seed + rep
        )
        plan = with_manifests(plan, args.manifest, args.extra_ku)
        out = args.out if args.repeats == 1 else f"{args.out}.r{rep}"
        save_plan(plan, out)
        log.info("wrote plan %s (%d fit / %d validation samples)", out, len(plan.fit), len(plan.validation))
    return 0


def cmd_train(args) -> int:
    plan = load_plan(args.plan)
    if args.classifier not in VARIANTS:
        raise OsbenchInputError(
            f"unknown classifier {args.classifier!r}; choose from {', '.join(VARIANTS)}"
        )
    grid = parse_grid_file(args.grid) if args.grid else default_grid(
        args.classifier, plan.final_train.feature_dim
    )
    template = ClassifierSpec(args.classifier, {}, seed=args.seed)
    result = grid_search(template, plan, grid, jobs=args.jobs)
    save_model(result.final_model, args.out_model)
    if args.out_log:
        save_search_log(result, args.out_log)
    log.info(
        "trained %s: best %s=%.6f with %s",
        args.classifier, result.metric_name, result.best_metric, result.best_hyperparams,
    )
    return 0


def cmd_evaluate(args) -> int:
    models = [load_model(p) for p in args.model]
    test = load_manifest(args.test)
    registry = models[0].class_names
    test = align_to_registry(test, registry)
    report, keys, truths, preds = evaluate_models(
        models, test, granularity=args.granularity, allow_partial=args.allow_partial
    )
    class_names = [models[0].class_names[c] for c in models[0].class_ids]
    meta = {
        "mode": args.mode,
        "granularity": args.granularity,
        "models": "+".join(os.path.basename(p) for p in args.model),
        "test": os.path.basename(args.test),
    }
    text = format_report(report, meta, class_names)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    if args.figures:
        render_confusion_figure(report.confusion, class_names, _figure_path(args.out))
    if args.dump_predictions:
        write_predictions(
            args.dump_predictions, keys, truths, preds, class_names,
            {"granularity": args.granularity, "mode": args.mode,
             "n_known": len(class_names)},
        )
    if args.mode == "detect":
        log.info("detect: da=%s dks=%s dus=%s", report.da, report.dks, report.dus)
    else:
        log.info("classify: na=%s aks=%s aus=%s", report.na, report.aks, report.aus)
    return 0


def cmd_fuse(args) -> int:
    dumps = [read_predictions(p) for p in args.dump]
    keys0, truths0, _, names0, _ = dumps[0]
    predictions = []
    standalone = []
    ids = []
    n = len(names0)
    for path, (keys, truths, preds, names, _meta) in zip(args.dump, dumps):
        if names != names0:
            raise OsbenchInputError(f"{path}: class list differs from {args.dump[0]}")
        if keys != keys0 or truths != truths0:
            raise OsbenchInputError(f"{path}: rows not aligned with {args.dump[0]}")
        from .evaluation import to_positions

        class_ids = tuple(range(n))
        value = metric_na(
            confusion_from_indices(
                to_positions(truths, class_ids), to_positions(preds, class_ids), n
            ),
            allow_partial=True,
        )
        ids.append(os.path.splitext(os.path.basename(path))[0])
        standalone.append(float(value))
        predictions.append(preds)

    results = enumerate_ensembles(
        ids, standalone, truths0, predictions, n,
        max_size=args.max_size, na_floor=args.na_floor, force=args.force,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("rank\tmembers\tsize\tna\n")
        for rank, r in enumerate(results, start=1):
            fh.write(f"{rank}\t{'+'.join(r.member_ids)}\t{r.size}\t{r.na!r}\n")
    if args.figures:
        render_fusion_figure(results, _figure_path(args.out))
    log.info("best ensemble: %s (na=%s)", "+".join(results[0].member_ids), results[0].na)
    return 0


def cmd_grid(args) -> int:
    model = load_model(args.model)
    if args.bounds:
        parts = [float(tok) for tok in args.bounds.split(",")]
        if len(parts) != 4:
            raise OsbenchInputError("--bounds wants xmin,xmax,ymin,ymax")
        bounds = ((parts[0], parts[1]), (parts[2], parts[3]))
    else:
        mean, std = model.scaler.mean, model.scaler.std
        i, j = args.dim_i, args.dim_j
        bounds = (
            (float(mean[i] - 4 * std[i]), float(mean[i] + 4 * std[i])),
            (float(mean[j] - 4 * std[j]), float(mean[j] + 4 * std[j])),
        )
    rows = export_decision_grid(model, (args.dim_i, args.dim_j), bounds, args.resolution)
    class_names = [model.class_names[c] for c in model.class_ids]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("x,y,label\n")
        for x, y, lab in rows:
            name = UNKNOWN_NAME if lab.is_unknown else model.class_names[lab.class_id]
            fh.write(f"{x!r},{y!r},{name}\n")
    if args.figures:
        render_grid_figure(rows, args.resolution, class_names, _figure_path(args.out),
                           (args.dim_i, args.dim_j))
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osbench",
        description="Open-set classification benchmark harness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="random seed (default OSBENCH_SEED or 0)")
        p.add_argument("--jobs", type=int, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-known", type=int, default=10)
    p.add_argument("--n-unknown", type=int, default=8)
    p.add_argument("--images-per-class", type=int, default=10)
    p.add_argument("--patches-per-image", type=int, default=32)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--format", choices=("osfv", "csv"), default="osfv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract features from raw image dumps")
    add_common(p)
    p.add_argument("--images", required=True, help="directory of <class>/<image>.osim dumps")
    p.add_argument("--out-features", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--patch-size", type=int, default=64)
    p.add_argument("--patch-count", type=int, default=32)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--truncation", type=int, default=2)
    p.add_argument("--quant", type=float, default=1.0)
    p.add_argument("--cross-channel", action="store_true")
    p.add_argument("--format", choices=("osfv", "csv"), default="osfv")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("split", help="build a training-protocol plan")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--protocol", choices=("closed", "open", "netopen"), required=True)
    p.add_argument("--extra-ku", help="extra known-unknown manifest (netopen)")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--repeats", type=int, default=1,
                   help="emit N plans seeded seed..seed+N-1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="grid-search a classifier on a plan")
    add_common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--grid", help="grid file (default: built-in grid)")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate model(s) on a test manifest")
    add_common(p)
    p.add_argument("--model", action="append", required=True,
                   help="model file; repeat for an ensemble")
    p.add_argument("--test", required=True)
    p.add_argument("--granularity", choices=("image", "patch"), default="image")
    p.add_argument("--mode", choices=("classify", "detect"), default="classify")
    p.add_argument("--allow-partial", action="store_true",
                   help="report one-sided accuracy averages instead of failing")
    p.add_argument("--dump-predictions", help="also write a prediction dump")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_evaluate, figures=True)

    p = sub.add_parser("fuse", help="rank ensemble combinations from dumps")
    add_common(p)
    p.add_argument("--dump", action="append", required=True)
    p.add_argument("--max-size", type=int, default=8)
    p.add_argument("--na-floor", type=float, default=0.7)
    p.add_argument("--force", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_fuse, figures=True)

    p = sub.add_parser("grid", help="export a decision-grid scan of a model")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dim-i", type=int, default=0)
    p.add_argument("--dim-j", type=int, default=1)
    p.add_argument("--bounds", help="xmin,xmax,ymin,ymax (default: mean +- 4 std)")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_grid, figures=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except OsbenchInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OsbenchError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
