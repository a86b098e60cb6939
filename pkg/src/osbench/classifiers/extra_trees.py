"""Extremely randomized trees with probability-threshold rejection.

Trees follow the classic extra-trees recipe (Geurts et al.): every tree sees
the full sample (no bootstrap), each split draws K candidate features with a
uniform random cut point inside the node's range and keeps the best Gini
reduction, and growth stops on purity or the minimum leaf size.  Leaves
store class frequencies; the ensemble probability is their mean over trees.

Axis-aligned leaves are unbounded, so like the softmax baseline this model
uses the support-box fallback: outside the expanded fit-data extent the
score is the uniform no-signal distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import HyperparameterError
from ..rng import spawn_rngs
from .base import Standardizer, SupportBox, TrainedModel


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # (nodes,) split feature, -1 at leaves
    threshold: np.ndarray  # (nodes,)
    left: np.ndarray  # (nodes,) child index, -1 at leaves
    right: np.ndarray
    leaf_probs: np.ndarray  # (nodes, n_classes), rows defined at leaves

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Class-frequency rows for each query."""
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            feats = self.feature[node[idx]]
            thr = self.threshold[node[idx]]
            go_left = x[idx, feats] <= thr
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
            active = self.feature[node] >= 0
        return self.leaf_probs[node]


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


def _build_tree(
    x: np.ndarray, y: np.ndarray, n_classes: int, k_features: int, min_leaf: int, rng
) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    probs: list[np.ndarray] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        probs.append(np.zeros(n_classes))
        return len(feature) - 1

    def choose_split(idx: np.ndarray):
        counts = np.bincount(y[idx], minlength=n_classes)
        if idx.size < 2 * min_leaf or idx.size < 2 or (counts > 0).sum() <= 1:
            return None
        parent_gini = _gini(counts.astype(np.float64))
        lo = x[idx].min(axis=0)
        hi = x[idx].max(axis=0)
        usable = np.flatnonzero(hi > lo)
        if usable.size == 0:
            return None
        chosen = rng.choice(usable, size=min(k_features, usable.size), replace=False)
        best = None
        for f in chosen:
            cut = rng.uniform(lo[f], hi[f])
            mask = x[idx, f] <= cut
            n_l = int(mask.sum())
            n_r = idx.size - n_l
            if n_l < min_leaf or n_r < min_leaf:
                continue
            g_l = _gini(np.bincount(y[idx[mask]], minlength=n_classes).astype(np.float64))
            g_r = _gini(np.bincount(y[idx[~mask]], minlength=n_classes).astype(np.float64))
            gain = parent_gini - (n_l * g_l + n_r * g_r) / idx.size
            if best is None or gain > best[0]:
                best = (gain, int(f), float(cut), mask)
        return best

    # explicit stack: random cuts can produce very unbalanced, deep trees
    root = new_node()
    stack = [(root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        split = choose_split(idx)
        if split is None:
            counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
            probs[node] = counts / counts.sum()
            continue
        _, f, cut, mask = split
        feature[node] = f
        threshold[node] = cut
        left[node] = new_node()
        right[node] = new_node()
        stack.append((left[node], idx[mask]))
        stack.append((right[node], idx[~mask]))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        leaf_probs=np.stack(probs),
    )


@dataclass(frozen=True, eq=False)
class ExtraTreesModel(TrainedModel):
    trees: tuple[Tree, ...] = None
    support: SupportBox = None

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        xs = self.scaler.transform(self._check(x))
        acc = np.zeros((xs.shape[0], self.n_classes))
        for tree in self.trees:
            acc += tree.apply(xs)
        acc /= len(self.trees)
        inside = self.support.contains(xs)
        acc[~inside] = 1.0 / self.n_classes
        return acc

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "ExtraTreesModel":
        hp = spec.hyperparams
        n_trees = int(hp["M"])
        min_leaf = int(hp["min_leaf"])
        if n_trees < 1 or min_leaf < 1:
            raise HyperparameterError("et: M and min_leaf must be >= 1")
        k = hp.get("K")
        k = int(np.ceil(np.sqrt(data.feature_dim))) if k in (None, 0) else int(k)
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        rngs = spawn_rngs(spec.seed, n_trees)
        trees = tuple(
            _build_tree(xs, positions, len(ids), k, min_leaf, rngs[t]) for t in range(n_trees)
        )
        return ExtraTreesModel(
            variant="et",
            class_ids=ids,
            class_names=dict(data.class_registry),
            scaler=scaler,
            feature_dim=data.feature_dim,
            seed=spec.seed,
            hyperparams=dict(hp),
            threshold=float(hp["tau"]),
            trees=trees,
            support=SupportBox.fit(xs),
        )
