"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_positions(X, name="X"):
    """1D particle positions from an (n,) or (n, 1) array-like."""
    arr = check_array(X, ensure_2d=False, dtype=float, input_name=name)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"{name} must have a single feature, got {arr.shape[1]}")
        arr = arr[:, 0]
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return np.ascontiguousarray(arr)


def check_density_rows(X, n_nodes, name="X"):
    """Rows of nonnegative nodal densities on a grid with ``n_nodes`` nodes."""
    arr = check_array(X, dtype=float, input_name=name)
    if arr.shape[1] != n_nodes:
        raise ValueError(f"{name} has {arr.shape[1]} columns, the grid has {n_nodes} nodes")
    if arr.min() < 0:
        raise ValueError(f"{name} holds negative densities")
    return arr


def check_scalar(value, name, *, lower=None, include_lower=False, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if not isinstance(value, kind) or isinstance(value, bool):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}")
    if lower is not None:
        bad = value < lower if include_lower else value <= lower
        if bad:
            op = ">=" if include_lower else ">"
            raise ValueError(f"{name} must be {op} {lower}, got {value}")
    return value
