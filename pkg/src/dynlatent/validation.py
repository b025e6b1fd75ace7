"""Input coercion shared by the estimator and command-line front end."""
from __future__ import annotations

import numpy as np

from .model import DynamicNetwork


def check_network(Y, directed: bool = True) -> DynamicNetwork:
    """Return ``Y`` as a :class:`DynamicNetwork`.

    Accepts a network, or an array of shape (T, n, n) or (n, n) with 0/1
    entries and NaN for missing cells.
    """
    if isinstance(Y, DynamicNetwork):
        return Y
    arr = np.asarray(Y, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected an array of shape (T, n, n), got {arr.shape}")
    return DynamicNetwork.from_array(arr, directed=directed)


def check_fitted(estimator, attribute: str = "chain_"):
    from sklearn.exceptions import NotFittedError

    if not hasattr(estimator, attribute):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
