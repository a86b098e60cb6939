"""osbench: an open-set classification benchmark harness.

Ingests labeled feature vectors (or extracts residual co-occurrence
features from image patches), splits data under closed/open/netopen
training protocols, trains a zoo of open-set classifiers with rejection,
grid-searches hyperparameters, aggregates patch votes to image decisions,
fuses model ensembles and reports the full open-set metric suite.
"""

from .data import (
    Dataset,
    Label,
    Sample,
    UNKNOWN,
    align_to_registry,
    group_by_image,
    known,
    load_manifest,
    relabel_as_unknown,
    save_manifest,
)
from .classifiers import ClassifierSpec, TrainedModel, fit, load_model, save_model
from .metrics import ConfusionMatrix, MetricsReport, confusion, full_report
from .protocols import SplitPlan, make_plan, plan_closed, plan_netopen, plan_open
from .search import Grid, default_grid, grid_search
from .fusion import ensemble_vote, enumerate_ensembles, image_vote
from .synth import make_benchmark

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Dataset",
    "Label",
    "Sample",
    "UNKNOWN",
    "known",
    "load_manifest",
    "save_manifest",
    "group_by_image",
    "relabel_as_unknown",
    "align_to_registry",
    "ClassifierSpec",
    "TrainedModel",
    "fit",
    "save_model",
    "load_model",
    "ConfusionMatrix",
    "MetricsReport",
    "confusion",
    "full_report",
    "SplitPlan",
    "make_plan",
    "plan_closed",
    "plan_open",
    "plan_netopen",
    "Grid",
    "default_grid",
    "grid_search",
    "image_vote",
    "ensemble_vote",
    "enumerate_ensembles",
    "make_benchmark",
]
