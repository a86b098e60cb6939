"""Shared machinery for the classifier zoo.

Every trained model exposes the same surface: ``score_batch`` returns the
variant's pre-threshold per-class scores and ``decide_batch`` applies the
variant's rejection rule to those scores, so ``predict`` is by construction
a pure function of the score vector.  Scores are indexed by position in
``class_ids`` (sorted registry ids of the classes seen at fit time).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..data import UNKNOWN, Label
from ..errors import OsbenchInputError

# Queries this far outside the fit-data extent (per dimension, relative to
# the box half-width) are treated as having no supporting evidence by the
# models that opt into the support guard.
SUPPORT_BOX_EXPANSION = 2.0


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension zero-mean unit-variance transform fit on training data."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return Standardizer(mean=mean, std=std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


@dataclass(frozen=True)
class SupportBox:
    """Axis-aligned extent of the (standardized) fit data, pre-expanded.

    Outside the expanded box a guarded model falls back to its no-signal
    score (the uniform distribution), which keeps threshold-based rejection
    meaningful arbitrarily far from the training support.
    """

    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def fit(x: np.ndarray, expansion: float = SUPPORT_BOX_EXPANSION) -> "SupportBox":
        x = np.asarray(x, dtype=np.float64)
        lo = x.min(axis=0)
        hi = x.max(axis=0)
        center = (lo + hi) / 2.0
        half = np.maximum((hi - lo) / 2.0, 1e-6) * expansion
        return SupportBox(lo=center - half, hi=center + half)

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return ((x >= self.lo) & (x <= self.hi)).all(axis=1)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Common immutable state of every fitted variant."""

    variant: str
    class_ids: tuple[int, ...]
    class_names: dict[int, str]
    scaler: Standardizer
    feature_dim: int
    seed: int
    hyperparams: dict = field(repr=False)
    threshold: float | None  # rejection threshold, None when the rule is fixed

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    # -- surface ---------------------------------------------------------

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.feature_dim:
            raise OsbenchInputError(
                f"expected vectors of dimension {self.feature_dim}, got shape {x.shape}"
            )
        return x

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score(self, f: np.ndarray) -> np.ndarray:
        return self.score_batch(np.asarray(f, dtype=np.float64)[None, :])[0]

    def _accept_mask(self, scores: np.ndarray) -> np.ndarray:
        """Default rule: accept when the best score reaches the threshold."""
        return scores.max(axis=1) >= self.threshold

    def decide_batch(self, scores: np.ndarray) -> list[Label]:
        scores = np.asarray(scores, dtype=np.float64)
        best = scores.argmax(axis=1)
        accept = self._accept_mask(scores)
        return [
            Label(self.class_ids[b]) if ok else UNKNOWN
            for b, ok in zip(best, accept)
        ]

    def predict_batch(self, x: np.ndarray) -> list[Label]:
        return self.decide_batch(self.score_batch(self._check(x)))

    def predict(self, f: np.ndarray) -> Label:
        return self.predict_batch(np.asarray(f, dtype=np.float64)[None, :])[0]

    def detect(self, f: np.ndarray) -> bool:
        """True when the query is attributed to some known class."""
        return not self.predict(f).is_unknown

    def detect_batch(self, x: np.ndarray) -> list[bool]:
        return [not lab.is_unknown for lab in self.predict_batch(x)]

    def with_threshold(self, value: float, key: str) -> "TrainedModel":
        """Clone with a different rejection threshold (fit state shared)."""
        hp = dict(self.hyperparams)
        hp[key] = value
        return replace(self, threshold=float(value), hyperparams=hp)


def export_decision_grid(
    model: TrainedModel,
    dims: tuple[int, int],
    bounds: tuple[tuple[float, float], tuple[float, float]],
    resolution: int,
) -> list[tuple[float, float, Label]]:
    """Predictions over a 2-D slice of feature space, row-major.

    Coordinates outside `dims` stay fixed at the training mean.  Rows scan
    the second axis outermost, so the output reshapes to an image directly.
    """
    i, j = dims
    if i == j:
        raise OsbenchInputError("grid dims must differ")
    if not (0 <= i < model.feature_dim and 0 <= j < model.feature_dim):
        raise OsbenchInputError("grid dims out of range")
    if resolution < 2:
        raise OsbenchInputError("grid resolution must be >= 2")
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)
    base = model.scaler.mean.copy()
    queries = np.tile(base, (resolution * resolution, 1))
    xx, yy = np.meshgrid(xs, ys)  # row-major over ys
    queries[:, i] = xx.ravel()
    queries[:, j] = yy.ravel()
    labels = model.predict_batch(queries)
    return [
        (float(queries[k, i]), float(queries[k, j]), labels[k])
        for k in range(queries.shape[0])
    ]
