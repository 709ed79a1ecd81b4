"""Input validation helpers used at module boundaries."""

import numpy as np

from .errors import ContractViolation, DataError


def as_float_array(a, name="array", ndim=None):
    """Convert to a float64 array, checking dimensionality and finiteness."""
    arr = np.asarray(a, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ContractViolation(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def check_square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"{name} must be square, got shape {M.shape}")
    return M


def check_symmetric(M, rtol=1e-9, name="matrix"):
    """Raise unless ``max|M - M^T| <= rtol * max|M|``."""
    scale = np.max(np.abs(M)) if M.size else 0.0
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > rtol * scale:
        raise ContractViolation(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return M


def check_probabilities(p, atol=1e-12, name="p"):
    """Validate a probability vector (or a stack of them along the last axis)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim < 1 or p.shape[-1] < 1:
        raise ContractViolation(f"{name} must have at least one entry")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ContractViolation(f"{name} entries must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > atol):
        raise ContractViolation(f"{name} must sum to 1 within {atol}")
    return p


def check_labels(y, n_classes, name="labels"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise DataError(f"{name} must be integers")
        y = y.astype(np.int64)
    y = y.astype(np.int64, copy=False)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise DataError(f"{name} must lie in [0, {n_classes})")
    return y
