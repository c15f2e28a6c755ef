"""Recursive unweighted and semi-weighted identification.

The estimate is refined window by window with the generalized RLS update

    K     = Sigma A^T (A Sigma A^T + Omega)^-1
    theta = theta + K (y - A theta)
    Sigma = (I - K A) Sigma

where ``Omega = I`` (``uw-re``) or ``Omega = L_k L_k^T`` (``sw-re``). The time
correlation of the regression error is ignored by both forms.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .estimators import EstimateReport, _Timer

POLICIES = ("uw-re", "sw-re")


@dataclass(frozen=True, eq=False)
class RlsState:
    theta: np.ndarray
    sigma: np.ndarray
    policy: str
    step: int = 0


def rls_init(theta0, sigma0, policy="sw-re"):
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    theta0 = np.array(theta0, dtype=float).reshape(-1)
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.ndim == 0:
        sigma0 = sigma0 * np.eye(theta0.size)
    if sigma0.shape != (theta0.size, theta0.size):
        raise ValueError(f"Sigma0 must be {theta0.size}x{theta0.size}")
    if not np.allclose(sigma0, sigma0.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma0).max())):
        raise ValueError("Sigma0 must be symmetric")
    if np.linalg.eigvalsh(sigma0)[0] < -1e-12 * max(1.0, np.abs(sigma0).max()):
        raise ValueError("Sigma0 must be positive semi-definite")
    return RlsState(theta0, sigma0.copy(), policy, 0)


def rls_step(state, y, A, L=None):
    """One update with window observations ``y``, design rows ``A`` and shaping rows ``L``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (y.size, state.theta.size):
        raise ValueError(f"design block has shape {A.shape}, expected {(y.size, state.theta.size)}")
    if state.policy == "uw-re":
        omega = np.eye(y.size)
    else:
        if L is None:
            raise ValueError("sw-re needs the shaping block L_k")
        L = np.atleast_2d(np.asarray(L, dtype=float))
        if L.shape[0] != y.size:
            raise ValueError("shaping block row count differs from the observation block")
        omega = L @ L.T
    theta, sigma = kernels.rls_step_np(state.theta, state.sigma, A, y, omega)
    return RlsState(theta, sigma, state.policy, state.step + 1)


@dataclass(frozen=True, eq=False)
class RlsResult:
    trace: np.ndarray
    ks: np.ndarray
    state: RlsState
    report: EstimateReport


def rls_run(system, init, backend=None):
    """Run the recursion over all windows of a regression system in time order.

    Parameters
    ----------
    system : RegressionSystem
    init : RlsState
        Initial estimate, ``Sigma_0`` and policy.

    Returns
    -------
    RlsResult
        ``trace[i]`` is the estimate after window ``ks[i]``; ``report`` holds
        the final estimate with the final ``Sigma`` as its covariance.
    """
    with _Timer() as t:
        Lrows = system.Lrows if init.policy == "sw-re" else None
        theta, sigma, trace = kernels.rls_sweep(
            init.theta, init.sigma, system.A, system.y, system.row_off, Lrows, backend
        )
    state = RlsState(theta, sigma, init.policy, init.step + system.n_windows)
    report = EstimateReport(init.policy, theta, sigma, system.layout, t.elapsed)
    return RlsResult(trace=trace, ks=system.ks, state=state, report=report)
