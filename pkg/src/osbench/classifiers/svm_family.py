"""SVM-based open-set classifiers.

All of them build on one-vs-all binary SVMs over standardized features:

* svm_ova
    rejects when every binary decision value is negative.
* psvm
    adds a per-class Platt sigmoid, fitted on out-of-fold decision values
    (2-fold) to avoid calibrating on optimistic in-sample scores; rejects
    when the best posterior falls below tau.
* pisvm
    calibrates each class's positive training scores with a Weibull fit to
    the boundary-side tail, reading the CDF as a probability of inclusion;
    rejects below delta.  Far from the data every decision value sinks
    below the fitted tail, so the accepted region is bounded.
* two_stage
    a single enclosing ball over all known data gates stage one; a psvm
    picks the class for accepted queries.
* binary_detector
    known versus known-unknown super-class detector (psvm or extra-trees
    base); requires unknown-labeled rows in the fit data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset, Label
from ..errors import HyperparameterError, OsbenchInputError
from ..numerics import (
    SvmModel,
    WeibullParams,
    kernel_matrix,
    platt_fit,
    platt_prob,
    svm_train_binary,
    weibull_mle_shifted,
)
from ..rng import make_rng
from .base import Standardizer, TrainedModel
from .enclosing_ball import BallModel, fit_ball
from .extra_trees import ExtraTreesModel

SVM_TOL = 1e-3
PISVM_TAIL_FRACTION = 0.5


def _ova_decisions(svms: tuple[SvmModel, ...], xs: np.ndarray) -> np.ndarray:
    return np.column_stack([svm.decision_batch(xs) for svm in svms])


def _fit_ova(xs: np.ndarray, positions: np.ndarray, n: int, c: float, kernel) -> tuple[SvmModel, ...]:
    gram = kernel_matrix(kernel, xs, xs)
    svms = []
    for p in range(n):
        y = np.where(positions == p, 1.0, -1.0)
        svms.append(svm_train_binary(xs, y, c, kernel, tol=SVM_TOL, gram=gram))
    return tuple(svms)


def _two_folds(positions: np.ndarray, seed: int) -> np.ndarray:
    """Per-class alternating fold assignment, seeded."""
    rng = make_rng(seed)
    folds = np.zeros(positions.shape[0], dtype=np.int64)
    for p in np.unique(positions):
        idx = np.flatnonzero(positions == p)
        idx = idx[rng.permutation(idx.size)]
        folds[idx[idx.size // 2 :]] = 1
    return folds


def _platt_out_of_fold(
    xs: np.ndarray, positions: np.ndarray, n: int, c: float, kernel, seed: int
) -> list[tuple[float, float]]:
    """Per-class (A, B) from 2-fold out-of-fold decision values."""
    folds = _two_folds(positions, seed)
    oof = np.zeros((xs.shape[0], n))
    for held in (0, 1):
        tr = folds != held
        te = ~tr
        gram = kernel_matrix(kernel, xs[tr], xs[tr])
        for p in range(n):
            y_tr = np.where(positions[tr] == p, 1.0, -1.0)
            if (y_tr > 0).sum() == 0 or (y_tr < 0).sum() == 0:
                # fold lost one side entirely; fall back to a flat score
                oof[te, p] = 0.0
                continue
            svm = svm_train_binary(xs[tr], y_tr, c, kernel, tol=SVM_TOL, gram=gram)
            oof[te, p] = svm.decision_batch(xs[te])
    params = []
    for p in range(n):
        y = np.where(positions == p, 1.0, -1.0)
        params.append(platt_fit(oof[:, p], y))
    return params


@dataclass(frozen=True, eq=False)
class SvmOvaModel(TrainedModel):
    svms: tuple[SvmModel, ...] = None

    def _accept_mask(self, scores: np.ndarray) -> np.ndarray:
        return scores.max(axis=1) > 0.0

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        return _ova_decisions(self.svms, self.scaler.transform(self._check(x)))

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "SvmOvaModel":
        hp = spec.hyperparams
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        svms = _fit_ova(xs, positions, len(ids), float(hp["C"]), spec.kernel_for(data.feature_dim))
        return SvmOvaModel(
            variant="svm_ova", class_ids=ids, class_names=dict(data.class_registry),
            scaler=scaler, feature_dim=data.feature_dim, seed=spec.seed,
            hyperparams=dict(hp), threshold=None, svms=svms,
        )


@dataclass(frozen=True, eq=False)
class PlattSvmModel(TrainedModel):
    svms: tuple[SvmModel, ...] = None
    platt: tuple[tuple[float, float], ...] = None

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        dec = _ova_decisions(self.svms, self.scaler.transform(self._check(x)))
        return np.column_stack(
            [platt_prob(dec[:, p], *self.platt[p]) for p in range(self.n_classes)]
        )

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "PlattSvmModel":
        hp = spec.hyperparams
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        c = float(hp["C"])
        kernel = spec.kernel_for(data.feature_dim)
        svms = _fit_ova(xs, positions, len(ids), c, kernel)
        platt = tuple(_platt_out_of_fold(xs, positions, len(ids), c, kernel, spec.seed))
        return PlattSvmModel(
            variant="psvm", class_ids=ids, class_names=dict(data.class_registry),
            scaler=scaler, feature_dim=data.feature_dim, seed=spec.seed,
            hyperparams=dict(hp), threshold=float(hp["tau"]), svms=svms, platt=platt,
        )


@dataclass(frozen=True, eq=False)
class PiSvmModel(TrainedModel):
    svms: tuple[SvmModel, ...] = None
    weibulls: tuple[WeibullParams, ...] = None

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        dec = _ova_decisions(self.svms, self.scaler.transform(self._check(x)))
        return np.column_stack(
            [self.weibulls[p].cdf(dec[:, p]) for p in range(self.n_classes)]
        )

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "PiSvmModel":
        hp = spec.hyperparams
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        kernel = spec.kernel_for(data.feature_dim)
        svms = _fit_ova(xs, positions, len(ids), float(hp["C"]), kernel)
        tail = float(hp.get("tail_fraction", PISVM_TAIL_FRACTION))
        if not 0 < tail <= 1:
            raise HyperparameterError("pisvm: tail_fraction must be in (0, 1]")
        weibulls = []
        for p in range(len(ids)):
            scores = np.sort(svms[p].decision_batch(xs[positions == p]))
            count = max(3, int(np.ceil(tail * scores.size)))
            weibulls.append(weibull_mle_shifted(scores[:count]))
        return PiSvmModel(
            variant="pisvm", class_ids=ids, class_names=dict(data.class_registry),
            scaler=scaler, feature_dim=data.feature_dim, seed=spec.seed,
            hyperparams=dict(hp), threshold=float(hp["delta"]),
            svms=svms, weibulls=tuple(weibulls),
        )


@dataclass(frozen=True, eq=False)
class TwoStageModel(TrainedModel):
    """Known-vs-unknown gate (one ball over all data) then a psvm classifier.

    The score vector holds the stage-two posteriors for gate-accepted
    queries and all zeros otherwise, so the usual max >= tau rule (tau > 0)
    reproduces the two-stage decision from scores alone.
    """

    gate: BallModel = None
    svms: tuple[SvmModel, ...] = None
    platt: tuple[tuple[float, float], ...] = None

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        xs = self.scaler.transform(self._check(x))
        accepted = self.gate.score_batch(xs) >= 0.0
        dec = _ova_decisions(self.svms, xs)
        probs = np.column_stack(
            [platt_prob(dec[:, p], *self.platt[p]) for p in range(self.n_classes)]
        )
        probs[~accepted] = 0.0
        return probs

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "TwoStageModel":
        hp = spec.hyperparams
        tau = float(hp["tau"])
        if not 0 < tau < 1:
            raise HyperparameterError("two_stage: tau must be in (0, 1)")
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        c = float(hp["C"])
        kernel = spec.kernel_for(data.feature_dim)
        gate = fit_ball(xs, float(hp["nu"]), kernel)
        svms = _fit_ova(xs, positions, len(ids), c, kernel)
        platt = tuple(_platt_out_of_fold(xs, positions, len(ids), c, kernel, spec.seed))
        return TwoStageModel(
            variant="two_stage", class_ids=ids, class_names=dict(data.class_registry),
            scaler=scaler, feature_dim=data.feature_dim, seed=spec.seed,
            hyperparams=dict(hp), threshold=tau, gate=gate, svms=svms, platt=platt,
        )


@dataclass(frozen=True, eq=False)
class BinaryDetectorModel(TrainedModel):
    """Known-vs-known-unknown super-class detector.

    Classification identity is out of its scope: accepted queries report the
    lowest known class id, and the per-class score vector broadcasts the
    single known-side probability.  Use the detect surface.
    """

    base: str = "psvm"
    svm: SvmModel | None = None
    platt_ab: tuple[float, float] | None = None
    forest: ExtraTreesModel | None = None

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        xs = self.scaler.transform(self._check(x))
        if self.base == "psvm":
            p_known = platt_prob(self.svm.decision_batch(xs), *self.platt_ab)
        else:
            p_known = self.forest.score_batch(x)[:, 0]
        return np.tile(p_known[:, None], (1, self.n_classes))

    @staticmethod
    def fit(spec, data: Dataset) -> "BinaryDetectorModel":
        hp = spec.hyperparams
        base = str(hp["base"])
        if base not in ("psvm", "et"):
            raise HyperparameterError("binary_detector: base must be psvm or et")
        known_mask = np.asarray([not l.is_unknown for l in data.labels])
        if known_mask.all() or not known_mask.any():
            raise OsbenchInputError(
                "binary_detector needs both known and unknown-labeled fit samples"
            )
        ids = tuple(sorted(data.present_class_ids))
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        tau = float(hp["tau"])

        svm = None
        platt_ab = None
        forest = None
        if base == "psvm":
            c = float(hp["C"])
            kernel = spec.kernel_for(data.feature_dim)
            y = np.where(known_mask, 1.0, -1.0)
            svm = svm_train_binary(xs, y, c, kernel, tol=SVM_TOL)
            folds = _two_folds(np.where(known_mask, 1, 0), spec.seed)
            oof = np.zeros(xs.shape[0])
            for held in (0, 1):
                tr = folds != held
                oof[~tr] = svm_train_binary(
                    xs[tr], y[tr], c, kernel, tol=SVM_TOL
                ).decision_batch(xs[~tr])
            platt_ab = platt_fit(oof, y)
        else:
            # binary forest over super-classes: position 0 = known, 1 = unknown
            from . import ClassifierSpec  # local import to avoid a cycle

            positions = np.where(known_mask, 0, 1)
            two_data = Dataset(
                data.features,
                [Label(int(p)) for p in positions],
                data.image_ids,
                data.patch_indices,
                {0: "known-superclass", 1: "ku-superclass"},
            )
            et_spec = ClassifierSpec(
                variant="et",
                hyperparams={
                    "M": int(hp["M"]),
                    "K": hp.get("K"),
                    "min_leaf": int(hp["min_leaf"]),
                    "tau": tau,
                },
                seed=spec.seed,
            )
            forest = ExtraTreesModel.fit(et_spec, two_data, positions)

        return BinaryDetectorModel(
            variant="binary_detector", class_ids=ids, class_names=dict(data.class_registry),
            scaler=scaler, feature_dim=data.feature_dim, seed=spec.seed,
            hyperparams=dict(hp), threshold=tau, base=base,
            svm=svm, platt_ab=platt_ab, forest=forest,
        )
