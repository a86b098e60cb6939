"""Distance-based open-set classifiers: nearest-neighbor ratio and class means."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from .base import Standardizer, SupportBox, TrainedModel

# Chunk size for pairwise-distance batches, keeps memory bounded.
_CHUNK = 512


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


@dataclass(frozen=True, eq=False)
class OsnnModel(TrainedModel):
    """Open-set nearest neighbor with distance-ratio rejection.

    For a query f, let t be the nearest training sample and v the nearest
    sample of a class other than t's.  The query takes t's class when
    d(f,t)/d(f,v) <= T, otherwise it is rejected.  The score vector carries
    1 - ratio in the nearest class's slot (zeros elsewhere), so the rule
    "accept iff max score >= 1 - T" reproduces the ratio test exactly.
    """

    train_x: np.ndarray = None  # standardized fit features
    train_y: np.ndarray = None  # positions into class_ids

    def _accept_mask(self, scores: np.ndarray) -> np.ndarray:
        return scores.max(axis=1) >= 1.0 - self.threshold

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        x = self.scaler.transform(self._check(x))
        n = self.n_classes
        out = np.zeros((x.shape[0], n))
        for start in range(0, x.shape[0], _CHUNK):
            chunk = x[start : start + _CHUNK]
            d2 = _sq_dists(chunk, self.train_x)
            nearest = d2.argmin(axis=1)
            d_t = np.sqrt(d2[np.arange(chunk.shape[0]), nearest])
            cls_t = self.train_y[nearest]
            other = self.train_y[None, :] != cls_t[:, None]
            d2_other = np.where(other, d2, np.inf)
            d_v = np.sqrt(d2_other.min(axis=1))
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(d_v > 0, d_t / d_v, np.where(d_t == 0, 1.0, np.inf))
            ratio = np.where((d_t == 0) & (d_v > 0), 0.0, ratio)
            rows = np.arange(chunk.shape[0])
            out[start + rows, cls_t] = 1.0 - np.minimum(ratio, 1.0)
            # an exact tie (d_t == d_v == 0) leaves the slot at 0: rejected
        return out

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "OsnnModel":
        scaler = Standardizer.fit(data.features)
        return OsnnModel(
            variant="osnn",
            class_ids=tuple(sorted(data.present_class_ids)),
            class_names=dict(data.class_registry),
            scaler=scaler,
            feature_dim=data.feature_dim,
            seed=spec.seed,
            hyperparams=dict(spec.hyperparams),
            threshold=float(spec.hyperparams["T"]),
            train_x=scaler.transform(data.features),
            train_y=positions,
        )


@dataclass(frozen=True, eq=False)
class NcmModel(TrainedModel):
    """Nearest class mean; scores are a softmax over negative distances.

    Distance differences stay finite arbitrarily far out, so the softmax
    alone does not push remote queries below a fixed threshold in every
    direction; like the other thresholded closed-set baselines the model
    falls back to the uniform no-signal score outside its support box.
    """

    means: np.ndarray = None  # (n, d) standardized class means
    support: SupportBox = None

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        x = self.scaler.transform(self._check(x))
        d = np.sqrt(_sq_dists(x, self.means))
        z = -d
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        probs[~self.support.contains(x)] = 1.0 / self.n_classes
        return probs

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "NcmModel":
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        means = np.stack([xs[positions == p].mean(axis=0) for p in range(len(ids))])
        return NcmModel(
            variant="ncm",
            class_ids=ids,
            class_names=dict(data.class_registry),
            scaler=scaler,
            feature_dim=data.feature_dim,
            seed=spec.seed,
            hyperparams=dict(spec.hyperparams),
            threshold=float(spec.hyperparams["tau"]),
            means=means,
            support=SupportBox.fit(xs),
        )
