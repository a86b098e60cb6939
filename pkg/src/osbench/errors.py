"""Exception taxonomy shared across the package.

`OsbenchInputError` covers everything caused by bad inputs (files, flags,
hyperparameters, degenerate data); the CLI maps it to exit code 2.  Other
`OsbenchError` subclasses are runtime failures and map to exit code 1.
"""

from __future__ import annotations


class OsbenchError(Exception):
    """Base class for all package errors."""


class OsbenchInputError(OsbenchError):
    """Invalid user input: files, formats, flags, preconditions."""


class ManifestError(OsbenchInputError):
    """Malformed or inconsistent manifest / feature / image / plan file."""


class HyperparameterError(OsbenchInputError):
    """Missing or out-of-range hyperparameter for a classifier variant."""


class UnimplementedVariantError(OsbenchInputError):
    """A registered classifier name whose algorithm is intentionally absent."""


class MetricsError(OsbenchInputError):
    """A metric was requested on data where it is undefined."""


class ConvergenceError(OsbenchError):
    """An iterative solver failed to converge within its budget."""
