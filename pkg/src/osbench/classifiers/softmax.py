"""Multinomial-logistic classifier with probability-threshold rejection.

A plain softmax accepts arbitrarily remote queries with probability
approaching 1, so thresholding alone cannot bound the accepted region.  To
give the threshold teeth far from the data, scores fall back to the uniform
no-signal distribution outside the expanded support box of the fit data.
Inside the box the model is exactly regularized multinomial logistic
regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..numerics import logistic_train, softmax_probabilities
from .base import Standardizer, SupportBox, TrainedModel


@dataclass(frozen=True, eq=False)
class SoftmaxModel(TrainedModel):
    weights: np.ndarray = None  # (n, d)
    bias: np.ndarray = None  # (n,)
    support: SupportBox = None

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        xs = self.scaler.transform(self._check(x))
        probs = softmax_probabilities(self.weights, self.bias, xs)
        inside = self.support.contains(xs)
        probs[~inside] = 1.0 / self.n_classes
        return probs

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "SoftmaxModel":
        hp = spec.hyperparams
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        w, b = logistic_train(
            xs,
            positions,
            n_classes=len(ids),
            l2=float(hp["l2"]),
            lr=float(hp["lr"]),
            epochs=int(hp["epochs"]),
            seed=spec.seed,
        )
        return SoftmaxModel(
            variant="softmax",
            class_ids=ids,
            class_names=dict(data.class_registry),
            scaler=scaler,
            feature_dim=data.feature_dim,
            seed=spec.seed,
            hyperparams=dict(hp),
            threshold=float(hp["tau"]),
            weights=w,
            bias=b,
            support=SupportBox.fit(xs),
        )
