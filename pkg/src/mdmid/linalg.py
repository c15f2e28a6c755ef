"""Numerical-rank conventions shared by the whole package."""

import numpy as np


def rank_tolerance(s, shape):
    """Singular value threshold ``max(m, n) * eps * s_max``."""
    if s.size == 0:
        return 0.0
    return max(shape) * np.finfo(float).eps * float(s[0])


def numerical_rank(a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > rank_tolerance(s, a.shape)))


def pinv(a):
    """Moore-Penrose pseudo-inverse by SVD with the package rank tolerance.

    Returns
    -------
    a_pinv : ndarray
    rank : int
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m, n = a.shape
    if a.size == 0:
        return np.zeros((n, m)), 0
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > rank_tolerance(s, a.shape)
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T, int(keep.sum())


def pinv_sym(s):
    """Pseudo-inverse of a symmetric PSD matrix through its eigendecomposition."""
    s = 0.5 * (s + s.T)
    w, v = np.linalg.eigh(s)
    wmax = np.max(np.abs(w)) if w.size else 0.0
    keep = w > s.shape[0] * np.finfo(float).eps * wmax
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return (v * inv_w) @ v.T


def pinv_sym_batched(s):
    """:func:`pinv_sym` over a stack of equally sized matrices ``(g, m, m)``."""
    s = 0.5 * (s + np.swapaxes(s, 1, 2))
    w, v = np.linalg.eigh(s)
    wmax = np.max(np.abs(w), axis=1, keepdims=True)
    keep = w > s.shape[1] * np.finfo(float).eps * wmax
    inv_w = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (v * inv_w[:, None, :]) @ np.swapaxes(v, 1, 2)
