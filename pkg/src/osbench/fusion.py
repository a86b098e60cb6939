"""Patch-to-image voting, multi-model ensemble voting, subset enumeration.

Tie rule (both voters): if the unknown label is among the tied leaders the
vote is unknown, otherwise the lowest class id wins.  The ensemble voter
additionally rejects outright when unknown votes hold a strict majority
(more than half); an exact half does not reject.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import UNKNOWN, Label
from .errors import OsbenchInputError
from .metrics import confusion_from_indices, na


def image_vote(patch_predictions: list[Label]) -> Label:
    """Plurality vote over one image's patch predictions."""
    if not patch_predictions:
        raise OsbenchInputError("image_vote needs at least one prediction")
    counts = Counter(patch_predictions)
    top = max(counts.values())
    leaders = [lab for lab, c in counts.items() if c == top]
    if len(leaders) == 1:
        return leaders[0]
    if any(lab.is_unknown for lab in leaders):
        return UNKNOWN
    return min(leaders)


def ensemble_vote(model_predictions: list[Label]) -> Label:
    """Vote across models: reject on unknown majority, else known plurality."""
    if not model_predictions:
        raise OsbenchInputError("ensemble_vote needs at least one prediction")
    total = len(model_predictions)
    unknown_votes = sum(1 for lab in model_predictions if lab.is_unknown)
    if 2 * unknown_votes > total:
        return UNKNOWN
    known = [lab for lab in model_predictions if not lab.is_unknown]
    if not known:
        return UNKNOWN
    counts = Counter(known)
    top = max(counts.values())
    return min(lab for lab, c in counts.items() if c == top)


@dataclass(frozen=True)
class EnsembleResult:
    member_ids: tuple[str, ...]
    size: int
    na: float


# Refuse blind enumeration beyond 2**20 subsets unless forced.
POOL_CAP = 20


def _vote_matrix(pred_idx: np.ndarray, n: int) -> np.ndarray:
    """Vectorized ensemble_vote over columns of a (k, N) index matrix."""
    k, _ = pred_idx.shape
    class_counts = np.stack([(pred_idx == c).sum(axis=0) for c in range(n)])
    unknown_counts = (pred_idx == n).sum(axis=0)
    best = class_counts.argmax(axis=0)  # first max = lowest class id
    best_count = class_counts.max(axis=0)
    out = np.where(best_count > 0, best, n)
    out = np.where(2 * unknown_counts > k, n, out)
    return out


def enumerate_ensembles(
    model_ids: list[str],
    standalone_na: list[float],
    truths: list[Label],
    predictions: list[list[Label]],
    n: int,
    max_size: int = 8,
    na_floor: float = 0.7,
    force: bool = False,
) -> list[EnsembleResult]:
    """Rank every model subset of size 1..max_size by ensemble NA.

    Models whose standalone NA does not exceed `na_floor` are dropped first.
    Ranking is descending NA; ties keep enumeration order (by subset size,
    then lexicographic member indices), so output is deterministic.
    """
    if not (len(model_ids) == len(standalone_na) == len(predictions)):
        raise OsbenchInputError("model ids, NA values and prediction lists must align")
    for p in predictions:
        if len(p) != len(truths):
            raise OsbenchInputError("prediction list not aligned to truths")

    eligible = [i for i, v in enumerate(standalone_na) if v > na_floor]
    if not eligible:
        raise OsbenchInputError(f"no model passes the NA floor {na_floor}")
    if len(eligible) > POOL_CAP and not force:
        raise OsbenchInputError(
            f"{len(eligible)} models pass the floor; enumeration beyond {POOL_CAP} needs force=True"
        )

    def to_idx(lab: Label) -> int:
        return n if lab.is_unknown else lab.class_id

    truth_idx = np.asarray([to_idx(l) for l in truths], dtype=np.int64)
    pred_idx = np.asarray([[to_idx(l) for l in p] for p in predictions], dtype=np.int64)

    results: list[EnsembleResult] = []
    limit = min(max_size, len(eligible))
    for size in range(1, limit + 1):
        for combo in itertools.combinations(eligible, size):
            fused = _vote_matrix(pred_idx[list(combo)], n)
            value = na(confusion_from_indices(truth_idx, fused, n), allow_partial=True)
            results.append(
                EnsembleResult(tuple(model_ids[i] for i in combo), size, float(value))
            )
    order = sorted(range(len(results)), key=lambda i: (-results[i].na, i))
    return [results[i] for i in order]
