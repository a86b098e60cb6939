"""Hyperparameter grid search driven by a split plan.

Every grid point is assessed by fitting on the plan's fitting set and
scoring its validation set with the selection metric: normalized accuracy
when validation mixes known and unknown labels (open and netopen plans),
plain accuracy otherwise.  The winner is refit on ``final_train``.

Pure rejection thresholds never influence fitting, so points differing only
in the threshold reuse one fitted model and one score pass; results are
identical to refitting every point, just cheaper.  Ties break toward the
earliest point in axis order, and the log records every point.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierSpec, THRESHOLD_KEY, fit
from .data import Dataset, concat_datasets, relabel_as_unknown
from .errors import OsbenchError, OsbenchInputError
from .evaluation import plain_accuracy, to_positions
from .metrics import confusion_from_indices, na
from .protocols import NETOPEN, OPEN, SplitPlan

log = logging.getLogger(__name__)

METRIC_NA = "na"
METRIC_ACC = "acc"


@dataclass(frozen=True)
class Grid:
    axes: dict[str, list] = field(default_factory=dict)
    selection_metric: str | None = None  # None = pick from the plan

    def __post_init__(self):
        for name, values in self.axes.items():
            if not values:
                raise OsbenchInputError(f"grid axis {name!r} is empty")
        if self.selection_metric not in (None, METRIC_NA, METRIC_ACC):
            raise OsbenchInputError("selection_metric must be na or acc")

    @property
    def size(self) -> int:
        out = 1
        for values in self.axes.values():
            out *= len(values)
        return out


@dataclass(frozen=True)
class SearchEntry:
    index: int
    hyperparams: dict
    metric: float  # nan when the point failed
    error: str | None = None


@dataclass(frozen=True)
class SearchResult:
    best_hyperparams: dict
    best_metric: float
    metric_name: str
    final_model: object
    log: tuple[SearchEntry, ...]


DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "osnn": {"T": [round(0.3 + 0.1 * i, 1) for i in range(7)]},
    "svm_ova": {"C": [0.1, 1.0, 10.0, 100.0]},
    "psvm": {"C": [0.1, 1.0, 10.0, 100.0], "tau": [round(0.1 * i, 1) for i in range(1, 10)]},
    "softmax": {"l2": [1e-4, 1e-2], "lr": [0.1], "epochs": [100],
                "tau": [round(0.1 * i, 1) for i in range(1, 10)]},
    "ncm": {"tau": [round(0.1 * i, 1) for i in range(1, 10)]},
    "et": {"M": [100], "min_leaf": [1, 5], "tau": [round(0.1 * i, 1) for i in range(1, 10)]},
    "occ_perclass": {"nu": [0.01, 0.05, 0.1, 0.2]},
    "two_stage": {"nu": [0.01, 0.05, 0.1, 0.2], "C": [0.1, 1.0, 10.0, 100.0],
                  "tau": [round(0.1 * i, 1) for i in range(1, 10)]},
    "pisvm": {"C": [0.1, 1.0, 10.0, 100.0], "delta": [round(0.1 * i, 1) for i in range(1, 10)]},
    "binary_detector": {"C": [0.1, 1.0, 10.0, 100.0], "tau": [0.5]},
}


def default_grid(variant: str, feature_dim: int) -> Grid:
    if variant not in DEFAULT_GRIDS:
        raise OsbenchInputError(f"no default grid for variant {variant!r}")
    axes = {k: list(v) for k, v in DEFAULT_GRIDS[variant].items()}
    if variant in ("svm_ova", "psvm", "pisvm", "two_stage", "occ_perclass"):
        axes["gamma"] = [1.0 / feature_dim, 4.0 / feature_dim, 16.0 / feature_dim]
    return Grid(axes=axes)


def parse_grid_file(path: str) -> Grid:
    """Read a flat grid file: one ``axis=v1,v2,...`` line per axis."""
    axes: dict[str, list] = {}
    metric = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise OsbenchInputError(f"{path}: expected axis=values, got {line!r}")
            name, values = line.split("=", 1)
            name = name.strip()
            if name == "selection_metric":
                metric = values.strip()
                continue
            axes[name] = [_parse_value(tok.strip()) for tok in values.split(",") if tok.strip()]
    return Grid(axes=axes, selection_metric=metric)


def _parse_value(token: str):
    for cast in (int, float):
        try:
            return cast(token)
        except ValueError:
            continue
    if token == "none":
        return None
    return token


def selection_metric_for(plan: SplitPlan) -> str:
    has_unknown = any(l.is_unknown for l in plan.validation.labels)
    return METRIC_NA if has_unknown else METRIC_ACC


def _fit_data_for(variant: str, plan: SplitPlan, final: bool) -> Dataset:
    """Training data for one grid point (or the final refit).

    The binary detector is the exception: it needs unknown-labeled rows, so
    it absorbs the plan's known-unknown data.  Under netopen the extra
    samples merge in directly; under open the final refit relabels the
    known-unknown classes inside the full training set instead (they are
    the same images, so a merge would duplicate them).
    """
    base = plan.final_train if final else plan.fit
    if variant != "binary_detector":
        return base
    if plan.protocol == OPEN and final:
        return relabel_as_unknown(plan.final_train, set(plan.ku_class_ids))
    if plan.protocol in (OPEN, NETOPEN):
        ku_idx = [i for i, l in enumerate(plan.validation.labels) if l.is_unknown]
        if not ku_idx:
            raise OsbenchInputError("plan supplies no known-unknown data")
        return concat_datasets(
            [base, plan.validation.subset(ku_idx)], base.class_registry
        )
    raise OsbenchInputError(
        "binary_detector needs an open or netopen plan with known-unknown data"
    )


def _evaluate_metric(metric_name, truths, preds, class_ids) -> float:
    if metric_name == METRIC_ACC:
        return plain_accuracy(truths, preds)
    t = to_positions(truths, class_ids)
    p = to_positions(preds, class_ids)
    return na(confusion_from_indices(t, p, len(class_ids)))


def grid_search(
    spec_template: ClassifierSpec,
    plan: SplitPlan,
    grid: Grid,
    jobs: int = 1,
) -> SearchResult:
    if grid.size < 1:
        raise OsbenchInputError("empty grid")
    axes_names = list(grid.axes)
    points = list(itertools.product(*(grid.axes[k] for k in axes_names)))
    metric_name = grid.selection_metric or selection_metric_for(plan)
    thr_key = THRESHOLD_KEY.get(spec_template.variant)

    merged_points = [
        {**spec_template.hyperparams, **dict(zip(axes_names, pt))} for pt in points
    ]

    def fit_key(hp: dict):
        return tuple(sorted((k, v) for k, v in hp.items() if k != thr_key))

    # one fit + one validation score pass per distinct fit key
    distinct: dict[tuple, dict] = {}
    for hp in merged_points:
        distinct.setdefault(fit_key(hp), hp)

    val_x = plan.validation.features
    val_truths = list(plan.validation.labels)
    fit_data = _fit_data_for(spec_template.variant, plan, final=False)

    def fit_and_score(hp: dict):
        try:
            model = fit(ClassifierSpec(spec_template.variant, hp, spec_template.seed), fit_data)
            scores = model.score_batch(val_x) if len(val_truths) else np.zeros((0, 1))
            return (model, scores, None)
        except OsbenchError as exc:
            return (None, None, str(exc))

    keys = list(distinct)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fitted = dict(zip(keys, pool.map(lambda k: fit_and_score(distinct[k]), keys)))
    else:
        fitted = {k: fit_and_score(distinct[k]) for k in keys}

    entries: list[SearchEntry] = []
    best_idx: int | None = None
    best_metric = -np.inf
    for idx, hp in enumerate(merged_points):
        model, scores, err = fitted[fit_key(hp)]
        if err is not None:
            entries.append(SearchEntry(idx, hp, float("nan"), err))
            continue
        point_model = (
            model.with_threshold(float(hp[thr_key]), thr_key)
            if thr_key is not None and hp.get(thr_key) != model.threshold
            else model
        )
        try:
            preds = point_model.decide_batch(scores)
            value = _evaluate_metric(metric_name, val_truths, preds, point_model.class_ids)
        except OsbenchError as exc:
            entries.append(SearchEntry(idx, hp, float("nan"), str(exc)))
            continue
        entries.append(SearchEntry(idx, hp, float(value)))
        if value > best_metric:
            best_metric = float(value)
            best_idx = idx

    if best_idx is None:
        raise OsbenchError("grid search failed: no grid point could be fit and scored")

    best_hp = merged_points[best_idx]
    log.info("grid search winner %s with %s=%.6f", best_hp, metric_name, best_metric)
    final_model = fit(
        ClassifierSpec(spec_template.variant, best_hp, spec_template.seed),
        _fit_data_for(spec_template.variant, plan, final=True),
    )
    return SearchResult(
        best_hyperparams=best_hp,
        best_metric=best_metric,
        metric_name=metric_name,
        final_model=final_model,
        log=tuple(entries),
    )


def save_search_log(result: SearchResult, path: str) -> None:
    """One tab-separated row per grid point, in evaluation order."""
    names = sorted({k for e in result.log for k in e.hyperparams})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["index", *names, result.metric_name, "error"]) + "\n")
        for e in result.log:
            row = [str(e.index)]
            row.extend(repr(e.hyperparams.get(k)) for k in names)
            row.append(repr(e.metric))
            row.append(e.error or "")
            fh.write("\t".join(row) + "\n")
