"""Shared prediction-to-metrics plumbing.

Metrics index classes by *position* in a model's class list.  A truth label
whose class the model never trained on (an unknown-unknown from the model's
point of view) maps to the unknown position: the model cannot name it, so
for scoring purposes it is unknown.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, Label, group_by_image
from .errors import OsbenchInputError
from .fusion import ensemble_vote, image_vote
from .metrics import MetricsReport, confusion_from_indices, report_from_confusion

PREDICT_CHUNK = 2048


def patch_predictions(model, dataset: Dataset) -> list[Label]:
    """Per-sample predictions, batched for memory."""
    out: list[Label] = []
    x = dataset.features
    for start in range(0, len(dataset), PREDICT_CHUNK):
        out.extend(model.predict_batch(x[start : start + PREDICT_CHUNK]))
    return out


def image_level(dataset: Dataset, patch_preds: list[Label]):
    """Aggregate patch predictions to image decisions by plurality vote.

    Returns (image_ids, truths, voted_predictions); an image's truth is its
    patches' shared label.
    """
    groups = group_by_image(dataset)
    pred_of = {}
    for i, img in enumerate(dataset.image_ids):
        pred_of.setdefault(img, []).append(patch_preds[i])
    image_ids: list[str] = []
    truths: list[Label] = []
    preds: list[Label] = []
    for img, samples in groups.items():
        labels = {s.label for s in samples}
        if len(labels) != 1:
            raise OsbenchInputError(f"image {img!r} carries mixed truth labels")
        image_ids.append(img)
        truths.append(next(iter(labels)))
        preds.append(image_vote(pred_of[img]))
    return image_ids, truths, preds


def to_positions(labels: list[Label], class_ids: tuple[int, ...]) -> np.ndarray:
    """Map labels onto score positions; classes outside the model are unknown."""
    pos_of = {cid: p for p, cid in enumerate(class_ids)}
    n = len(class_ids)
    return np.asarray(
        [n if (l.is_unknown or l.class_id not in pos_of) else pos_of[l.class_id] for l in labels],
        dtype=np.int64,
    )


def score_predictions(
    truths: list[Label],
    preds: list[Label],
    class_ids: tuple[int, ...],
    allow_partial: bool = False,
) -> MetricsReport:
    t = to_positions(truths, class_ids)
    p = to_positions(preds, class_ids)
    return report_from_confusion(
        confusion_from_indices(t, p, len(class_ids)), allow_partial
    )


def plain_accuracy(truths: list[Label], preds: list[Label]) -> float:
    if not truths:
        raise OsbenchInputError("accuracy undefined on empty data")
    return float(np.mean([t == p for t, p in zip(truths, preds)]))


def evaluate_models(
    models: list,
    dataset: Dataset,
    granularity: str = "image",
    allow_partial: bool = False,
):
    """Full evaluation of one model or an ensemble on an aligned dataset.

    Ensembles vote per decision unit: at image granularity each model votes
    with its own per-image plurality label first.  Returns
    (report, keys, truths, predictions).
    """
    if granularity not in ("image", "patch"):
        raise OsbenchInputError(f"granularity must be image or patch, got {granularity!r}")
    if not models:
        raise OsbenchInputError("no models given")
    first = models[0]
    for m in models[1:]:
        if m.feature_dim != first.feature_dim:
            raise OsbenchInputError("ensemble models disagree on feature dimension")
        if [m.class_names.get(c) for c in m.class_ids] != [
            first.class_names.get(c) for c in first.class_ids
        ]:
            raise OsbenchInputError("ensemble models disagree on class registry")

    per_model: list[list[Label]] = []
    keys: list[str] | None = None
    truths: list[Label] | None = None
    for m in models:
        patch_preds = patch_predictions(m, dataset)
        if granularity == "patch":
            cur_keys = [f"{img}#{pi}" for img, pi in zip(dataset.image_ids, dataset.patch_indices)]
            cur_truths = list(dataset.labels)
            cur_preds = patch_preds
        else:
            cur_keys, cur_truths, cur_preds = image_level(dataset, patch_preds)
        if keys is None:
            keys, truths = cur_keys, cur_truths
        per_model.append(cur_preds)

    if len(models) == 1:
        fused = per_model[0]
    else:
        fused = [
            ensemble_vote([per_model[m][i] for m in range(len(models))])
            for i in range(len(keys))
        ]
    report = score_predictions(truths, fused, first.class_ids, allow_partial)
    return report, keys, truths, fused
