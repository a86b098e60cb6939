"""Self-contained numeric kernels used by the classifier zoo.

Everything here is dependency-free beyond numpy and deterministic for a
fixed seed: kernel functions, a binary soft-margin SVM solver, multinomial
logistic training, Platt sigmoid calibration, and Weibull maximum-likelihood
fitting.
"""

from .kernels import KernelSpec, kernel_eval, kernel_matrix
from .logistic import logistic_loss_and_grad, logistic_train, softmax_probabilities
from .platt import platt_fit, platt_prob
from .svm import SvmModel, svm_train_binary
from .weibull import WeibullParams, weibull_mle, weibull_mle_shifted

__all__ = [
    "KernelSpec",
    "kernel_eval",
    "kernel_matrix",
    "SvmModel",
    "svm_train_binary",
    "logistic_train",
    "logistic_loss_and_grad",
    "softmax_probabilities",
    "platt_fit",
    "platt_prob",
    "WeibullParams",
    "weibull_mle",
    "weibull_mle_shifted",
]
