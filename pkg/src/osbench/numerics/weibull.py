"""Two-parameter Weibull maximum-likelihood fitting.

The shape is found by Newton iteration on the standard MLE fixed-point
equation starting from k = 1; the scale follows in closed form.  Data are
pre-scaled by their mean for conditioning (the shape estimate is scale
invariant).  A location shift can be recorded so decision scores that are
not positive can be fit after shifting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, OsbenchInputError

SHIFT_EPS = 1e-6


@dataclass(frozen=True)
class WeibullParams:
    shape: float  # k > 0
    scale: float  # lambda > 0
    shift: float = 0.0  # subtracted from data before fitting

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise OsbenchInputError("weibull shape and scale must be positive")

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        z = x - self.shift
        out = np.zeros_like(z)
        posmask = z > 0
        out[posmask] = 1.0 - np.exp(-np.power(z[posmask] / self.scale, self.shape))
        return out

    def inverse_cdf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return self.shift + self.scale * np.power(-np.log1p(-u), 1.0 / self.shape)


def weibull_mle(samples, max_iter: int = 100, tol: float = 1e-10) -> WeibullParams:
    """Fit shape and scale to positive samples."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 3:
        raise OsbenchInputError("weibull_mle needs at least 3 samples")
    if (x <= 0).any():
        raise OsbenchInputError("weibull_mle needs strictly positive samples")
    if x.max() - x.min() <= 1e-15 * max(1.0, x.max()):
        raise OsbenchInputError("weibull_mle: degenerate all-equal samples")

    mean = x.mean()
    z = x / mean
    ln_z = np.log(z)
    mean_ln = ln_z.mean()

    k = 1.0
    converged = False
    for _ in range(max_iter):
        zk = np.power(z, k)
        a = (zk * ln_z).sum()
        g = zk.sum()
        f = a / g - mean_ln - 1.0 / k
        a_prime = (zk * ln_z * ln_z).sum()
        f_prime = (a_prime * g - a * a) / (g * g) + 1.0 / (k * k)
        step = f / f_prime
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0  # Newton overshot below zero; bisect toward it
        if abs(k_new - k) < tol:
            k = k_new
            converged = True
            break
        k = k_new
    if not converged:
        raise ConvergenceError("weibull_mle did not converge")

    lam = float(np.power(np.power(z, k).mean(), 1.0 / k)) * mean
    return WeibullParams(shape=float(k), scale=lam, shift=0.0)


def weibull_mle_shifted(values, max_iter: int = 100, tol: float = 1e-10) -> WeibullParams:
    """Fit after shifting data to (v - min(v) + eps); the shift is recorded.

    Lets possibly-negative decision scores be tail-fit; the CDF is 0 at and
    below the shift.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 3:
        raise OsbenchInputError("weibull fit needs at least 3 samples")
    shift = float(v.min()) - SHIFT_EPS
    params = weibull_mle(v - shift, max_iter=max_iter, tol=tol)
    return WeibullParams(shape=params.shape, scale=params.scale, shift=shift)
