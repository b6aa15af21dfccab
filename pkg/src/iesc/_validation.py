"""Input validation helpers shared across the package."""

import math
import numbers

import numpy as np
from sklearn.utils.validation import check_array


def as_matrix(X, name="X", allow_empty=False):
    """Return a finite 2-d float array or raise ``ValueError``."""
    X = check_array(
        X,
        dtype=np.float64,
        ensure_2d=True,
        ensure_all_finite=True,
        ensure_min_samples=0 if allow_empty else 1,
        ensure_min_features=0 if allow_empty else 1,
        input_name=name,
    )
    return X


def as_vector(y, name="y", length=None):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite entries")
    if length is not None and y.shape[0] != length:
        raise ValueError(f"{name} has length {y.shape[0]}, expected {length}")
    return y


def check_probability(p, name, *, open_low=True, open_high=True):
    if not isinstance(p, numbers.Real) or math.isnan(p):
        raise ValueError(f"{name} must be a real number, got {p!r}")
    lo_ok = p > 0 if open_low else p >= 0
    hi_ok = p < 1 if open_high else p <= 1
    if not (lo_ok and hi_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {p}")
    return float(p)


def check_positive_int(n, name, minimum=1):
    if isinstance(n, bool) or not isinstance(n, numbers.Integral) or n < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {n!r}")
    return int(n)


def check_rank(rank, m, n):
    check_positive_int(rank, "rank")
    if rank > min(m, n):
        raise ValueError(f"rank {rank} exceeds min(shape) = {min(m, n)}")
    return int(rank)


def ceil_int(x, tol=1e-9):
    """Ceiling that ignores floating-point fuzz just above an integer."""
    return int(math.ceil(x - tol))
