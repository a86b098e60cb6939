"""The open-set classifier zoo behind one fit/predict/score/detect surface.

Variants and their required hyperparameters:

====================  ==========================================  =========
variant               hyperparams                                 threshold
====================  ==========================================  =========
osnn                  T in (0,1)                                  T
svm_ova               C (kernel, gamma optional)                  fixed (0)
psvm                  C, tau in (0,1)                             tau
softmax               l2, lr, epochs, tau                         tau
ncm                   tau                                         tau
et                    M, K (None = ceil(sqrt(d))), min_leaf, tau  tau
occ_perclass          nu                                          fixed (0)
two_stage             nu, C, tau in (0,1)                         tau
pisvm                 C, delta in (0,1)                           delta
binary_detector       base (psvm: C, tau / et: M, K, min_leaf,
                      tau); fit data must mix known and unknown   tau
====================  ==========================================  =========

``wsvm``, ``dbc`` and ``ssvm`` are registered names whose algorithms live
elsewhere; they refuse to fit so result tables can show the gap honestly.

Kernelized variants read optional ``kernel`` ("rbf" or "linear", default
rbf) and ``gamma`` (default 1/d) hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..errors import HyperparameterError, OsbenchInputError, UnimplementedVariantError
from ..numerics import KernelSpec
from .base import Standardizer, SupportBox, TrainedModel, export_decision_grid
from .enclosing_ball import BallModel, OccPerClassModel, fit_ball
from .extra_trees import ExtraTreesModel
from .nearest import NcmModel, OsnnModel
from .softmax import SoftmaxModel
from .svm_family import (
    BinaryDetectorModel,
    PiSvmModel,
    PlattSvmModel,
    SvmOvaModel,
    TwoStageModel,
)
from .model_io import load_model, save_model

REQUIRED_HYPERPARAMS: dict[str, tuple[str, ...]] = {
    "osnn": ("T",),
    "svm_ova": ("C",),
    "psvm": ("C", "tau"),
    "softmax": ("l2", "lr", "epochs", "tau"),
    "ncm": ("tau",),
    "et": ("M", "K", "min_leaf", "tau"),
    "occ_perclass": ("nu",),
    "two_stage": ("nu", "C", "tau"),
    "pisvm": ("C", "delta"),
    "binary_detector": ("base",),
}

# Variants evaluated in the literature whose internals are out of scope here.
STUB_VARIANTS = ("wsvm", "dbc", "ssvm")

VARIANTS = tuple(REQUIRED_HYPERPARAMS) + STUB_VARIANTS

# Hyperparameter acting as the pure rejection threshold of each variant;
# it never affects fitting, which lets searches reuse fitted state.
THRESHOLD_KEY: dict[str, str] = {
    "osnn": "T",
    "psvm": "tau",
    "softmax": "tau",
    "ncm": "tau",
    "et": "tau",
    "two_stage": "tau",
    "pisvm": "delta",
    "binary_detector": "tau",
}


@dataclass(frozen=True)
class ClassifierSpec:
    variant: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise OsbenchInputError(f"unknown classifier variant {self.variant!r}")

    def kernel_for(self, feature_dim: int) -> KernelSpec:
        kind = str(self.hyperparams.get("kernel", "rbf"))
        if kind == "linear":
            return KernelSpec("linear")
        gamma = float(self.hyperparams.get("gamma", 1.0 / feature_dim))
        return KernelSpec("rbf", gamma=gamma)


_FITTERS = {
    "osnn": OsnnModel.fit,
    "svm_ova": SvmOvaModel.fit,
    "psvm": PlattSvmModel.fit,
    "softmax": SoftmaxModel.fit,
    "ncm": NcmModel.fit,
    "et": ExtraTreesModel.fit,
    "occ_perclass": OccPerClassModel.fit,
    "two_stage": TwoStageModel.fit,
    "pisvm": PiSvmModel.fit,
}

# Thresholds whose contracts pin them to the open unit interval.
_OPEN_UNIT_THRESHOLDS = {"psvm": "tau", "two_stage": "tau", "pisvm": "delta", "osnn": "T"}


def _validate_hyperparams(spec: ClassifierSpec) -> None:
    required = REQUIRED_HYPERPARAMS[spec.variant]
    missing = [k for k in required if k not in spec.hyperparams]
    if missing:
        raise HyperparameterError(
            f"{spec.variant}: missing hyperparameters {', '.join(missing)}"
        )
    if spec.variant == "binary_detector":
        base = spec.hyperparams.get("base")
        extra = ("C", "tau") if base == "psvm" else ("M", "K", "min_leaf", "tau")
        missing = [k for k in extra if k not in spec.hyperparams]
        if missing:
            raise HyperparameterError(
                f"binary_detector({base}): missing hyperparameters {', '.join(missing)}"
            )
    key = _OPEN_UNIT_THRESHOLDS.get(spec.variant)
    if key is not None:
        value = float(spec.hyperparams[key])
        if not 0.0 < value < 1.0:
            raise HyperparameterError(f"{spec.variant}: {key} must be in (0, 1)")


def fit(spec: ClassifierSpec, fit_data: Dataset) -> TrainedModel:
    """Train the variant named by `spec` on `fit_data`.

    Deterministic for a fixed spec (seed included) and fit data.
    """
    if spec.variant in STUB_VARIANTS:
        raise UnimplementedVariantError(
            f"variant {spec.variant!r} is registered but its algorithm is not implemented"
        )
    _validate_hyperparams(spec)
    if len(fit_data) == 0:
        raise OsbenchInputError("fit data is empty")

    if spec.variant == "binary_detector":
        return BinaryDetectorModel.fit(spec, fit_data)

    if any(l.is_unknown for l in fit_data.labels):
        raise OsbenchInputError(
            f"{spec.variant}: fit data must not contain unknown-labeled samples"
        )
    ids = fit_data.present_class_ids
    min_classes = 1 if spec.variant == "occ_perclass" else 2
    if len(ids) < min_classes:
        raise OsbenchInputError(
            f"{spec.variant}: needs at least {min_classes} classes, got {len(ids)}"
        )
    pos_of = {cid: p for p, cid in enumerate(ids)}
    positions = np.asarray([pos_of[l.class_id] for l in fit_data.labels], dtype=np.int64)
    return _FITTERS[spec.variant](spec, fit_data, positions)


__all__ = [
    "ClassifierSpec",
    "TrainedModel",
    "Standardizer",
    "SupportBox",
    "fit",
    "save_model",
    "load_model",
    "export_decision_grid",
    "REQUIRED_HYPERPARAMS",
    "THRESHOLD_KEY",
    "VARIANTS",
    "STUB_VARIANTS",
    "OsnnModel",
    "NcmModel",
    "SoftmaxModel",
    "ExtraTreesModel",
    "SvmOvaModel",
    "PlattSvmModel",
    "PiSvmModel",
    "TwoStageModel",
    "BinaryDetectorModel",
    "OccPerClassModel",
    "BallModel",
    "fit_ball",
]
