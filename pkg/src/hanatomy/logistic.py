"""Softmax cross-entropy and its first and second derivatives.

All functions accept a single logit vector of length C or a stack of them
with classes along the last axis.
"""

import numpy as np

from .validation import as_float_array, check_probabilities


def softmax(z):
    z = as_float_array(z, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = as_float_array(z, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def ce_loss(z, y):
    """Cross-entropy ``-log p_y`` computed through log-sum-exp."""
    logp = log_softmax(z)
    y = np.asarray(y)
    if logp.ndim == 1:
        return float(-logp[int(y)])
    return -np.take_along_axis(logp, y.astype(np.int64)[..., None], axis=-1)[..., 0]


def complement_mass(p):
    """``1 - p_k`` for every k, summed from the other entries to avoid cancellation."""
    p = np.asarray(p, dtype=np.float64)
    C = p.shape[-1]
    off = np.ones((C, C)) - np.eye(C)
    return p @ off


def ce_gradient(z, y):
    """Gradient of the cross-entropy with respect to the logits, ``p - y``.

    The true-class entry is formed as ``-sum_{k != y} p_k`` rather than
    ``p_y - 1`` so that confident predictions keep full relative accuracy.
    Entries therefore sum to zero up to a single rounding.
    """
    p = softmax(z)
    y = np.asarray(y).astype(np.int64)
    g = p.copy()
    if g.ndim == 1:
        g[y] = -float(np.sum(np.delete(p, int(y))))
        return g
    rows = np.arange(g.shape[0])
    g[rows, y] = -complement_mass(p)[rows, y]
    return g


def ce_hessian(p):
    """Hessian of the cross-entropy in the logits: ``diag(p) - p p^T``."""
    p = check_probabilities(p)
    return np.diag(p) - np.outer(p, p)


def factor_ce_hessian(p):
    """Factor ``A = diag(sqrt p) (I - 1 p^T)`` with ``A^T A = diag(p) - p p^T``.

    Row ``c'`` of ``A J`` is the centered, sqrt(p)-weighted logit derivative
    for logit coordinate ``c'``.
    """
    p = check_probabilities(p)
    C = p.shape[0]
    return np.sqrt(p)[:, None] * (np.eye(C) - np.outer(np.ones(C), p))
