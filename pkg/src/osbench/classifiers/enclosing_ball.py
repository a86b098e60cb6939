"""Minimum enclosing hypersphere with slack, and the per-class one-class zoo.

The ball is the classical support vector data description: minimize the
radius of a sphere around the data in kernel space, letting a fraction of
about `nu` of the points fall outside.  The dual (box-constrained, weights
summing to one) is solved by projected pairwise coordinate ascent, mirroring
the SVM solver's working-pair strategy.

Score of a query is radius minus kernel-space distance to the center, so 0
is the boundary; with an RBF kernel remote queries are strictly outside.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import HyperparameterError, OsbenchInputError
from ..numerics import KernelSpec, kernel_matrix
from .base import Standardizer, TrainedModel

log = logging.getLogger(__name__)

ITER_CAP_PER_SAMPLE = 10_000


@dataclass(frozen=True, eq=False)
class BallModel:
    """Fitted enclosing ball: score(x) = radius - ||phi(x) - center||."""

    points: np.ndarray  # (S, d) support points (beta > 0)
    beta: np.ndarray  # (S,) dual weights, sum to 1
    kernel: KernelSpec
    radius: float
    center_sq: float  # beta' K beta
    converged: bool

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        kq = kernel_matrix(self.kernel, x, self.points)
        if self.kernel.kind == "rbf":
            self_k = np.ones(x.shape[0])
        else:
            self_k = (x * x).sum(axis=1)
        d_sq = self_k - 2.0 * (kq @ self.beta) + self.center_sq
        np.maximum(d_sq, 0.0, out=d_sq)
        return self.radius - np.sqrt(d_sq)


def fit_ball(
    x: np.ndarray,
    nu: float,
    kernel: KernelSpec,
    tol: float = 1e-4,
    max_iter: int | None = None,
) -> BallModel:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 1:
        raise OsbenchInputError("ball fit needs at least one point")
    if not 0 < nu <= 1:
        raise HyperparameterError("nu must be in (0, 1]")

    if n == 1:
        return BallModel(
            points=x.copy(), beta=np.ones(1), kernel=kernel,
            radius=0.0, center_sq=float(kernel_matrix(kernel, x, x)[0, 0]),
            converged=True,
        )

    cap_box = max(1.0 / (nu * n), 1.0 / n)
    k = kernel_matrix(kernel, x, x)
    kd = np.diag(k).copy()

    beta = np.full(n, 1.0 / n)
    # gradient of the dual objective W = sum(beta*Kd) - beta'K beta
    grad = kd - 2.0 * (k @ beta)
    cap = max_iter if max_iter is not None else ITER_CAP_PER_SAMPLE * n
    eps_b = 1e-12
    converged = False

    for _ in range(cap):
        up = beta < cap_box - eps_b
        dn = beta > eps_b
        if not up.any() or not dn.any():
            converged = True
            break
        up_idx = np.flatnonzero(up)
        i = up_idx[np.argmax(grad[up_idx])]
        dn_idx = np.flatnonzero(dn)
        j = dn_idx[np.argmin(grad[dn_idx])]
        gap = grad[i] - grad[j]
        if gap <= tol:
            converged = True
            break
        quad = max(2.0 * (kd[i] + kd[j] - 2.0 * k[i, j]), 1e-12)
        t = gap / quad
        t = min(t, cap_box - beta[i], beta[j])
        if t <= 0:
            converged = True
            break
        beta[i] += t
        beta[j] -= t
        grad -= 2.0 * t * (k[:, i] - k[:, j])
    else:
        log.warning("ball solver hit the iteration cap (%d)", cap)

    np.clip(beta, 0.0, cap_box, out=beta)
    center_sq = float(beta @ k @ beta)
    d_sq_all = kd - 2.0 * (k @ beta) + center_sq
    np.maximum(d_sq_all, 0.0, out=d_sq_all)
    free = (beta > eps_b) & (beta < cap_box - eps_b)
    if free.any():
        radius = float(np.sqrt(d_sq_all[free]).mean())
    else:
        # all supports at the box bound (nu = 1): take the support boundary
        radius = float(np.sqrt(d_sq_all[beta > eps_b].max()))

    keep = beta > eps_b
    return BallModel(
        points=x[keep].copy(),
        beta=beta[keep].copy(),
        kernel=kernel,
        radius=radius,
        center_sq=center_sq,
        converged=converged,
    )


@dataclass(frozen=True, eq=False)
class OccPerClassModel(TrainedModel):
    """One enclosing ball per class; accept the best nonnegative score."""

    balls: tuple[BallModel, ...] = None

    def _accept_mask(self, scores: np.ndarray) -> np.ndarray:
        return scores.max(axis=1) >= 0.0

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        xs = self.scaler.transform(self._check(x))
        return np.column_stack([ball.score_batch(xs) for ball in self.balls])

    @staticmethod
    def fit(spec, data: Dataset, positions: np.ndarray) -> "OccPerClassModel":
        hp = spec.hyperparams
        scaler = Standardizer.fit(data.features)
        xs = scaler.transform(data.features)
        ids = tuple(sorted(data.present_class_ids))
        kernel = spec.kernel_for(data.feature_dim)
        balls = tuple(
            fit_ball(xs[positions == p], float(hp["nu"]), kernel) for p in range(len(ids))
        )
        return OccPerClassModel(
            variant="occ_perclass",
            class_ids=ids,
            class_names=dict(data.class_registry),
            scaler=scaler,
            feature_dim=data.feature_dim,
            seed=spec.seed,
            hyperparams=dict(hp),
            threshold=None,
            balls=balls,
        )
