"""Gaussian fourth moments of the stacked noise window.

The regression error of window ``k`` is ``eta_k = E_k (x) E_k - vec(Sigma)``
where ``E_k = [W_{k-N}^{P-1}; V_{k-N}^P]`` and ``Sigma = cov(E_k)``. For
Gaussian noise its lag covariances follow from Isserlis' theorem and depend on
``Q`` and ``R`` only. Windows further than ``P - 1`` steps apart share no noise
sample, so every lag ``j >= P`` vanishes.
"""

from dataclasses import dataclass

import numpy as np

from .vecmaps import noise_cov


@dataclass(frozen=True)
class JointNoiseCov:
    """Second moments of the pair ``(E_k, E_{k+j})``.

    ``sigma`` is ``cov(E_k)`` (the same for every k) and ``cross`` is
    ``E[E_k E_{k+j}^T]``.
    """

    sigma: np.ndarray
    cross: np.ndarray
    lag: int

    def full(self):
        return np.block([[self.sigma, self.cross], [self.cross.T, self.sigma]])


def lag_noise_cov(Q, R, P, j):
    """``E[E_k E_{k+j}^T]``: Q and R placed where the two windows share a sample."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n_w, n_v = Q.shape[0], R.shape[0]
    n = (P - 1) * n_w + P * n_v
    out = np.zeros((n, n))
    # block a of window k is the same sample as block a - j of window k + j
    for a in range(j, P - 1):
        b = a - j
        out[a * n_w : (a + 1) * n_w, b * n_w : (b + 1) * n_w] = Q
    base = (P - 1) * n_w
    for a in range(j, P):
        b = a - j
        out[base + a * n_v : base + (a + 1) * n_v, base + b * n_v : base + (b + 1) * n_v] = R
    return out


def joint_noise_cov(Q, R, P, j):
    if j < 0:
        raise ValueError("lag must be >= 0")
    return JointNoiseCov(sigma=noise_cov(Q, R, P), cross=lag_noise_cov(Q, R, P, j), lag=j)


def _swap_pair(t, n):
    # column (c, d) -> (d, c) of an (rows, n*n) matrix
    return t.reshape(t.shape[0], n, n).transpose(0, 2, 1).reshape(t.shape[0], n * n)


def gaussian_quartic(sigma_joint, nx, ny=None):
    """``E[(x (x) x)(y (x) y)^T]`` for zero-mean jointly Gaussian ``(x, y)``.

    Parameters
    ----------
    sigma_joint : ndarray, shape (nx + ny, nx + ny)
        Joint covariance with ``x`` first.
    nx, ny : int
        Sub-vector sizes; ``ny`` defaults to the remainder.
    """
    sigma_joint = np.asarray(sigma_joint, dtype=float)
    if ny is None:
        ny = sigma_joint.shape[0] - nx
    if sigma_joint.shape != (nx + ny, nx + ny):
        raise ValueError(
            f"joint covariance has shape {sigma_joint.shape}, expected {(nx + ny,) * 2}"
        )
    sxx = sigma_joint[:nx, :nx]
    syy = sigma_joint[nx:, nx:]
    sxy = sigma_joint[:nx, nx:]
    kk = np.kron(sxy, sxy)
    return np.outer(sxx.ravel(), syy.ravel()) + kk + _swap_pair(kk, ny)


def eta_cov(Q, R, P, j):
    """Matrix form of ``E[eta_k eta_{k+j}^T]``; exactly zero for ``j >= P``.

    ``j = 0`` gives the covariance of ``eta_k`` itself.
    """
    joint = joint_noise_cov(Q, R, P, j)
    n = joint.sigma.shape[0]
    if j >= P:
        return np.zeros((n * n, n * n))
    s = joint.sigma.ravel()
    return gaussian_quartic(joint.full(), n, n) - np.outer(s, s)
