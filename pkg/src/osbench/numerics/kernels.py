"""Kernel functions: linear and Gaussian RBF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import OsbenchInputError

LINEAR = "linear"
RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    kind: str = RBF
    gamma: float | None = None  # required for rbf

    def __post_init__(self):
        if self.kind not in (LINEAR, RBF):
            raise OsbenchInputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == RBF:
            if self.gamma is None or self.gamma <= 0:
                raise OsbenchInputError("rbf kernel needs gamma > 0")


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise OsbenchInputError("kernel_eval: dimension mismatch")
    if spec.kind == LINEAR:
        return float(np.dot(x, y))
    diff = x - y
    return float(np.exp(-spec.gamma * np.dot(diff, diff)))


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise kernel values, shape (len(a), len(b))."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise OsbenchInputError("kernel_matrix: dimension mismatch")
    if spec.kind == LINEAR:
        return a @ b.T
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-spec.gamma * sq)
