"""Binary soft-margin SVM trained by sequential pairwise dual optimization.

This is the classic SMO scheme with second-order working-pair selection
(maximal-violation first index, best expected decrease second index), the
same strategy popularized by LIBSVM.  The solver keeps the dual gradient
incrementally updated, so each step costs O(N) given the Gram matrix.

Optimality is declared when the maximal KKT violation drops to `tol`.
Hitting the iteration cap returns the current iterate with
``converged=False`` and a logged warning rather than raising: a usable, if
suboptimal, model is more informative than none during a grid sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import OsbenchInputError
from .kernels import KernelSpec, kernel_matrix

log = logging.getLogger(__name__)

# Cap on dual iterations, per sample.
ITER_CAP_PER_SAMPLE = 10_000


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Fitted binary decision model g(x) = sum_i alpha_i y_i K(x_i, x) + b."""

    support_vectors: np.ndarray  # (S, d)
    dual_coef: np.ndarray  # (S,) alpha_i * y_i
    bias: float
    kernel: KernelSpec
    converged: bool
    # full dual solution, kept for feasibility checks and serialization
    alpha: np.ndarray  # (N,)
    labels: np.ndarray  # (N,) +-1

    def decision_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.support_vectors.shape[0] == 0:
            return np.full(x.shape[0], self.bias)
        return kernel_matrix(self.kernel, x, self.support_vectors) @ self.dual_coef + self.bias

    def decision(self, x: np.ndarray) -> float:
        return float(self.decision_batch(np.asarray(x, dtype=np.float64)[None, :])[0])


def svm_train_binary(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    kernel: KernelSpec,
    tol: float = 1e-3,
    seed: int = 0,
    max_iter: int | None = None,
    gram: np.ndarray | None = None,
) -> SvmModel:
    """Solve the soft-margin dual for labels in {-1, +1}.

    `seed` is accepted for interface uniformity; the pair selection is
    deterministic, so it is unused.  `gram` may supply a precomputed kernel
    matrix for the rows of `x`.
    """
    del seed
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = x.shape[0]
    if y.shape[0] != n:
        raise OsbenchInputError("svm: x and y must align")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise OsbenchInputError("svm: labels must be +-1")
    if (y > 0).sum() == 0 or (y < 0).sum() == 0:
        raise OsbenchInputError("svm: both labels must be present")
    if c <= 0:
        raise OsbenchInputError("svm: C must be positive")

    k = kernel_matrix(kernel, x, x) if gram is None else np.asarray(gram, dtype=np.float64)
    if k.shape != (n, n):
        raise OsbenchInputError("svm: gram matrix has wrong shape")
    kd = np.diag(k).copy()

    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a at a = 0
    cap = max_iter if max_iter is not None else ITER_CAP_PER_SAMPLE * n
    pos = y > 0
    eps_b = 1e-12  # bound slack for "at bound" tests
    converged = False

    for _ in range(cap):
        neg_yg = -y * grad
        up = (pos & (alpha < c - eps_b)) | (~pos & (alpha > eps_b))
        low = (pos & (alpha > eps_b)) | (~pos & (alpha < c - eps_b))
        if not up.any() or not low.any():
            converged = True
            break
        up_idx = np.flatnonzero(up)
        i = up_idx[np.argmax(neg_yg[up_idx])]
        m_up = neg_yg[i]
        low_idx = np.flatnonzero(low)
        m_low = neg_yg[low_idx].min()
        if m_up - m_low <= tol:
            converged = True
            break

        # Second-order choice of j: largest guaranteed objective decrease
        # along the feasible pair direction.
        cand = low_idx[neg_yg[low_idx] < m_up]
        gd = m_up - neg_yg[cand]  # > 0
        quad = kd[i] + kd[cand] - 2.0 * k[i, cand]
        np.maximum(quad, 1e-12, out=quad)
        j = cand[np.argmin(-(gd * gd) / quad)]

        # Direction: d_alpha_i = y_i * t, d_alpha_j = -y_j * t, t >= 0 optimal
        gdiff = m_up + y[j] * grad[j]  # = m_up - neg_yg[j] > 0
        a_ij = max(kd[i] + kd[j] - 2.0 * k[i, j], 1e-12)
        t = gdiff / a_ij
        # box limits on t from both coordinates
        t_max_i = (c - alpha[i]) if y[i] > 0 else alpha[i]
        t_max_j = alpha[j] if y[j] > 0 else (c - alpha[j])
        t = min(t, t_max_i, t_max_j)
        if t <= 0:
            converged = True
            break
        d_i = y[i] * t
        d_j = -y[j] * t
        alpha[i] += d_i
        alpha[j] += d_j
        grad += (y * y[i] * k[:, i]) * d_i + (y * y[j] * k[:, j]) * d_j
    else:
        log.warning("svm solver hit the iteration cap (%d); returning current iterate", cap)

    np.clip(alpha, 0.0, c, out=alpha)

    # Bias from free support vectors; fall back to the violation midpoint.
    yg = y * grad
    free = (alpha > eps_b) & (alpha < c - eps_b)
    if free.any():
        bias = -float(yg[free].mean())
    else:
        neg_yg = -yg
        up = (pos & (alpha < c - eps_b)) | (~pos & (alpha > eps_b))
        low = (pos & (alpha > eps_b)) | (~pos & (alpha < c - eps_b))
        hi = neg_yg[up].max() if up.any() else 0.0
        lo = neg_yg[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)

    sv = alpha > eps_b
    return SvmModel(
        support_vectors=x[sv].copy(),
        dual_coef=(alpha * y)[sv].copy(),
        bias=bias,
        kernel=kernel,
        converged=converged,
        alpha=alpha,
        labels=y.copy(),
    )
