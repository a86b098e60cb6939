"""Multinomial logistic regression trained by mini-batch gradient descent."""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError, OsbenchInputError
from ..rng import make_rng

BATCH_SIZE = 64


def softmax_probabilities(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise class probabilities, numerically stable."""
    z = x @ weights.T + bias
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logistic_loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    l2: float,
):
    """Mean cross-entropy plus 0.5*l2*||W||^2 (bias unpenalized), with gradients."""
    n = x.shape[0]
    probs = softmax_probabilities(weights, bias, x)
    eps = np.finfo(np.float64).tiny
    ce = -np.log(probs[np.arange(n), y] + eps).mean()
    loss = ce + 0.5 * l2 * float((weights * weights).sum())
    delta = probs
    delta[np.arange(n), y] -= 1.0
    grad_w = delta.T @ x / n + l2 * weights
    grad_b = delta.mean(axis=0)
    return loss, grad_w, grad_b


def logistic_train(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    l2: float,
    lr: float,
    epochs: int,
    seed: int,
    batch_size: int = BATCH_SIZE,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (weights (n_classes, d), bias (n_classes,)).

    Classes are dense integers in [0, n_classes).  Batches are reshuffled
    each epoch from the seed, so the result is reproducible.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).ravel()
    if n_classes < 2:
        raise OsbenchInputError("logistic_train needs at least 2 classes")
    if x.shape[0] != y.shape[0]:
        raise OsbenchInputError("logistic_train: x and y must align")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise OsbenchInputError("logistic_train: class ids out of range")
    if l2 < 0 or lr <= 0 or epochs < 1:
        raise OsbenchInputError("logistic_train: bad l2/lr/epochs")

    n, d = x.shape
    rng = make_rng(seed)
    w = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    bs = min(batch_size, n)
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            _, gw, gb = logistic_loss_and_grad(w, b, x[idx], y[idx], l2)
            w -= lr * gw
            b -= lr * gb
    loss, _, _ = logistic_loss_and_grad(w, b, x, y, l2)
    if not np.isfinite(loss):
        raise ConvergenceError("logistic training diverged (non-finite loss)")
    return w, b
