"""Platt sigmoid calibration of decision scores.

Fits P(y=+1 | s) = 1 / (1 + exp(A*s + B)) by minimizing the regularized
negative log-likelihood with the usual smoothed targets
t+ = (N+ + 1)/(N+ + 2), t- = 1/(N- + 2), using damped Newton iterations
with a backtracking line search (the numerically robust formulation of
Lin, Weng and Keerthi).
"""

from __future__ import annotations

import numpy as np

from ..errors import OsbenchInputError


def platt_prob(scores: np.ndarray, a: float, b: float) -> np.ndarray:
    """Calibrated probability of the positive label."""
    z = a * np.asarray(scores, dtype=np.float64) + b
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def _objective(z: np.ndarray, t: np.ndarray) -> float:
    # sum of t*log(1+e^-z) + (1-t)*... in the overflow-safe split form
    val = np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                   (t - 1.0) * z + np.log1p(np.exp(-np.abs(z))))
    return float(val.sum())


def platt_fit(scores, labels, max_iter: int = 100) -> tuple[float, float]:
    """Fit (A, B) on decision scores and +-1 labels."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if s.shape != y.shape:
        raise OsbenchInputError("platt_fit: scores and labels must align")
    n_pos = int((y > 0).sum())
    n_neg = int((y <= 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise OsbenchInputError("platt_fit: both labels must be present")

    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y > 0, hi, lo)

    a = 0.0
    b = float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    sigma = 1e-12
    min_step = 1e-10
    fval = _objective(a * s + b, t)

    for _ in range(max_iter):
        p = platt_prob(s, a, b)
        d2 = p * (1.0 - p)
        h11 = float((s * s * d2).sum()) + sigma
        h22 = float(d2.sum()) + sigma
        h21 = float((s * d2).sum())
        d1 = t - p
        g1 = float((s * d1).sum())
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(h11 * g2 - h21 * g1) / det
        gd = g1 * da + g2 * db

        step = 1.0
        while step >= min_step:
            na_, nb = a + step * da, b + step * db
            nf = _objective(na_ * s + nb, t)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na_, nb, nf
                break
            step /= 2.0
        else:
            break  # line search failed: current point is as good as it gets
    return float(a), float(b)
