"""Confusion matrices over n known classes plus unknown, and derived metrics.

Index convention: rows are true labels, columns are predictions, index n is
the unknown label.  Known class ids passed to these functions must already
lie in [0, n); callers working with sparse registries map ids to positions
first (see ``osbench.evaluation``).

Metric definitions:

* aks: accuracy over known-truth samples (exact class required).
* aus: accuracy rejecting unknown-truth samples.
* na:  (aks + aus) / 2.
* dks: fraction of known-truth samples detected as known (any known class).
* dus: same as aus; da = (dks + dus) / 2.
* osfm (macro/micro): f-measure whose precision/recall sums span only the
  known classes, so the unknown label contributes false positives and false
  negatives but never true positives.
* fm (macro/micro): plain multi-class f-measure treating unknown as an
  (n+1)-th class.

Macro f-measures are the harmonic mean of the averaged precision and the
averaged recall (not the mean of per-class F1).  Per-class terms with a zero
denominator count as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Label
from .errors import MetricsError, OsbenchInputError


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (n+1, n+1) int64
    n: int

    def __post_init__(self):
        if self.counts.shape != (self.n + 1, self.n + 1):
            raise OsbenchInputError("confusion counts must be (n+1) x (n+1)")
        if (self.counts < 0).any():
            raise OsbenchInputError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _label_index(label: Label, n: int) -> int:
    if label.is_unknown:
        return n
    if label.class_id >= n:
        raise OsbenchInputError(f"class id {label.class_id} out of range for n={n}")
    return label.class_id


def confusion_from_indices(truth_idx: np.ndarray, pred_idx: np.ndarray, n: int) -> ConfusionMatrix:
    """Build a confusion matrix from integer indices (n encodes unknown)."""
    truth_idx = np.asarray(truth_idx, dtype=np.int64)
    pred_idx = np.asarray(pred_idx, dtype=np.int64)
    if truth_idx.shape != pred_idx.shape:
        raise OsbenchInputError("truths and predictions differ in length")
    if truth_idx.size and (truth_idx.max() > n or pred_idx.max() > n or truth_idx.min() < 0 or pred_idx.min() < 0):
        raise OsbenchInputError("label index out of range")
    k = n + 1
    flat = truth_idx * k + pred_idx
    counts = np.bincount(flat, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts.astype(np.int64), n)


def confusion(truths: list[Label], predictions: list[Label], n: int) -> ConfusionMatrix:
    if len(truths) != len(predictions):
        raise OsbenchInputError("truths and predictions differ in length")
    t = np.asarray([_label_index(l, n) for l in truths], dtype=np.int64)
    p = np.asarray([_label_index(l, n) for l in predictions], dtype=np.int64)
    return confusion_from_indices(t, p, n)


# -- accuracy family ----------------------------------------------------


def accuracy(cm: ConfusionMatrix) -> float:
    """Plain accuracy over all n+1 labels."""
    total = cm.total
    if total == 0:
        raise MetricsError("accuracy undefined on empty data")
    return float(np.trace(cm.counts)) / total


def aks(cm: ConfusionMatrix) -> float:
    known_rows = cm.counts[: cm.n]
    denom = known_rows.sum()
    if denom == 0:
        raise MetricsError("aks undefined: no known-truth samples")
    return float(np.trace(known_rows[:, : cm.n])) / float(denom)


def aus(cm: ConfusionMatrix) -> float:
    denom = cm.counts[cm.n].sum()
    if denom == 0:
        raise MetricsError("aus undefined: no unknown-truth samples")
    return float(cm.counts[cm.n, cm.n]) / float(denom)


def _two_sided(a_fn, b_fn, cm: ConfusionMatrix, allow_partial: bool) -> float:
    try:
        a = a_fn(cm)
    except MetricsError:
        a = None
    try:
        b = b_fn(cm)
    except MetricsError:
        b = None
    if a is not None and b is not None:
        return (a + b) / 2.0
    if a is None and b is None:
        raise MetricsError("metric undefined: both populations empty")
    if not allow_partial:
        raise MetricsError("metric one-sided; pass allow_partial to accept the defined side")
    return a if a is not None else b  # type: ignore[return-value]


def na(cm: ConfusionMatrix, allow_partial: bool = False) -> float:
    return _two_sided(aks, aus, cm, allow_partial)


def dks(cm: ConfusionMatrix) -> float:
    known_rows = cm.counts[: cm.n]
    denom = known_rows.sum()
    if denom == 0:
        raise MetricsError("dks undefined: no known-truth samples")
    detected = denom - known_rows[:, cm.n].sum()
    return float(detected) / float(denom)


def dus(cm: ConfusionMatrix) -> float:
    return aus(cm)


def da(cm: ConfusionMatrix, allow_partial: bool = False) -> float:
    return _two_sided(dks, dus, cm, allow_partial)


# -- f-measure family ---------------------------------------------------


def _per_class_terms(cm: ConfusionMatrix, span: int):
    tp = np.diag(cm.counts)[:span].astype(np.float64)
    col = cm.counts.sum(axis=0)[:span].astype(np.float64)
    row = cm.counts.sum(axis=1)[:span].astype(np.float64)
    return tp, col, row  # col = tp+fp, row = tp+fn


def _fmeasure(p: float, r: float) -> float:
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _macro(cm: ConfusionMatrix, span: int) -> float:
    tp, col, row = _per_class_terms(cm, span)
    prec = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    rec = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    return _fmeasure(float(prec.mean()), float(rec.mean())) if span else 0.0


def _micro(cm: ConfusionMatrix, span: int) -> float:
    tp, col, row = _per_class_terms(cm, span)
    p = float(tp.sum() / col.sum()) if col.sum() > 0 else 0.0
    r = float(tp.sum() / row.sum()) if row.sum() > 0 else 0.0
    return _fmeasure(p, r)


def osfm_macro(cm: ConfusionMatrix) -> float:
    return _macro(cm, cm.n)


def osfm_micro(cm: ConfusionMatrix) -> float:
    return _micro(cm, cm.n)


def fm_macro(cm: ConfusionMatrix) -> float:
    return _macro(cm, cm.n + 1)


def fm_micro(cm: ConfusionMatrix) -> float:
    return _micro(cm, cm.n + 1)


# -- aggregate report ---------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    aks: float
    aus: float
    na: float
    dks: float
    dus: float
    da: float
    osfm_macro: float
    osfm_micro: float
    fm_macro: float
    fm_micro: float
    confusion: ConfusionMatrix

    FIELD_ORDER = ("aks", "aus", "na", "dks", "dus", "da",
                   "osfm_macro", "osfm_micro", "fm_macro", "fm_micro")


def report_from_confusion(cm: ConfusionMatrix, allow_partial: bool = False) -> MetricsReport:
    def _maybe(fn):
        try:
            return fn(cm)
        except MetricsError:
            if allow_partial:
                return float("nan")
            raise

    return MetricsReport(
        aks=_maybe(aks),
        aus=_maybe(aus),
        na=na(cm, allow_partial),
        dks=_maybe(dks),
        dus=_maybe(dus),
        da=da(cm, allow_partial),
        osfm_macro=osfm_macro(cm),
        osfm_micro=osfm_micro(cm),
        fm_macro=fm_macro(cm),
        fm_micro=fm_micro(cm),
        confusion=cm,
    )


def full_report(
    truths: list[Label], predictions: list[Label], n: int, allow_partial: bool = False
) -> MetricsReport:
    """Ten-metric report from aligned truth/prediction label lists."""
    return report_from_confusion(confusion(truths, predictions, n), allow_partial)
