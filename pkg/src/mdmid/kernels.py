"""Hot loops over window starts, in numba and plain numpy flavours.

* :func:`observations` evaluates every residual ``Zt_k = A_k B_k [-U; Z]`` and
  the lower-triangle products ``Zt_k[a] Zt_k[c]``.
* :func:`rls_sweep` runs the generalized recursive least-squares update
  through all windows.
* :func:`p2_band` fills the upper band of the regression-error covariance.

Both flavours of a kernel take the same packed arrays and return the same
result up to round-off.
"""

import numpy as np
from scipy.linalg import cho_solve

from ._accel import njit, resolve
from .linalg import pinv_sym, pinv_sym_batched
from .vecmaps import tril_pairs


# ---------------------------------------------------------------- observations


@njit
def _observations_nb(op_flat, op_off, m, width, didx, didx_off, res_off, row_off, data, res, out):
    for i in range(m.size):
        mi = m[i]
        wi = width[i]
        base = op_off[i]
        d0 = didx_off[i]
        r0 = res_off[i]
        for a in range(mi):
            s = 0.0
            for b in range(wi):
                s += op_flat[base + a * wi + b] * data[didx[d0 + b]]
            res[r0 + a] = s
        r = row_off[i]
        for c in range(mi):
            for a in range(c, mi):
                out[r] = res[r0 + a] * res[r0 + c]
                r += 1


def _observations_np(groups, data, n_res, n_rows):
    res = np.empty(n_res)
    out = np.empty(n_rows)
    for g in groups:
        zt = np.einsum("gmw,gw->gm", g["ops"], data[g["didx"]])
        res[g["res_idx"]] = zt
        a, c = tril_pairs(zt.shape[1])
        out[g["row_idx"]] = zt[:, a] * zt[:, c]
    return res, out


def observations(packed, data, backend=None):
    """Residuals and observation vector for all windows.

    Parameters
    ----------
    packed : dict
        Arrays produced by :meth:`mdmid.estimators.RegressionDesign.packed`.
    data : ndarray
        ``concatenate([-u_flat, z_flat])`` of one trajectory.

    Returns
    -------
    residuals, y : ndarray
        Flat residuals (offsets ``res_off``) and observations (offsets ``row_off``).
    """
    if resolve(backend) == "numpy":
        return _observations_np(packed["groups"], data, packed["n_res"], packed["n_rows"])
    res = np.empty(packed["n_res"])
    out = np.empty(packed["n_rows"])
    _observations_nb(
        packed["op_flat"], packed["op_off"], packed["m"], packed["width"],
        packed["didx"], packed["didx_off"], packed["res_off"], packed["row_off"],
        np.ascontiguousarray(data, dtype=np.float64), res, out,
    )
    return res, out


# ------------------------------------------------------------------------ RLS


@njit
def _chol_solve_inplace(S, X, h, ncol, tol, Lc):
    """Solve ``S Y = X`` on the leading ``h x h`` / ``h x ncol`` blocks, in place.

    ``Lc`` is scratch space. Returns False when a pivot falls below ``tol``.
    """
    for j in range(h):
        d = S[j, j]
        for q in range(j):
            d -= Lc[j, q] * Lc[j, q]
        if d <= tol:
            return False
        d = np.sqrt(d)
        Lc[j, j] = d
        for i in range(j + 1, h):
            s = S[i, j]
            for q in range(j):
                s -= Lc[i, q] * Lc[j, q]
            Lc[i, j] = s / d
    for c in range(ncol):
        for i in range(h):
            s = X[i, c]
            for q in range(i):
                s -= Lc[i, q] * X[q, c]
            X[i, c] = s / Lc[i, i]
        for i in range(h - 1, -1, -1):
            s = X[i, c]
            for q in range(i + 1, h):
                s -= Lc[q, i] * X[q, c]
            X[i, c] = s / Lc[i, i]
    return True


@njit
def _pinv_solve(S, X, h, ncol):
    # same rule as linalg.pinv_sym: drop eigenvalues below h * eps * max|w|
    Sh = np.ascontiguousarray(S[:h, :h])
    w, v = np.linalg.eigh(0.5 * (Sh + Sh.T))
    tol = h * np.finfo(np.float64).eps * np.max(np.abs(w))
    inv_w = np.zeros(h)
    for i in range(h):
        if w[i] > tol:
            inv_w[i] = 1.0 / w[i]
    Y = (v * inv_w) @ (v.T @ np.ascontiguousarray(X[:h, :ncol]))
    X[:h, :ncol] = Y


@njit
def _rls_nb(theta, sigma, A, y, row_off, Lrows, weighted, trace):
    p = theta.size
    eps = np.finfo(np.float64).eps
    hmax = 0
    for i in range(row_off.size - 1):
        hmax = max(hmax, row_off[i + 1] - row_off[i])
    SAt = np.empty((p, hmax))
    S = np.empty((hmax, hmax))
    Kt = np.empty((hmax, p))
    Lc = np.empty((hmax, hmax))
    innov = np.empty(hmax)
    for i in range(row_off.size - 1):
        r0 = row_off[i]
        h = row_off[i + 1] - r0
        # SAt = sigma A^T  (p x h)
        for a in range(p):
            for b in range(h):
                s = 0.0
                for q in range(p):
                    s += sigma[a, q] * A[r0 + b, q]
                SAt[a, b] = s
        smax = 0.0
        for a in range(h):
            for b in range(a, h):
                s = 0.0
                for q in range(p):
                    s += A[r0 + a, q] * SAt[q, b]
                if weighted:
                    for q in range(Lrows.shape[1]):
                        s += Lrows[r0 + a, q] * Lrows[r0 + b, q]
                elif a == b:
                    s += 1.0
                S[a, b] = s
                S[b, a] = s
            smax = max(smax, abs(S[a, a]))
        # Kt = S^-1 SAt^T  (h x p)
        for b in range(h):
            for a in range(p):
                Kt[b, a] = SAt[a, b]
        if not _chol_solve_inplace(S, Kt, h, p, h * eps * smax, Lc):
            for b in range(h):
                for a in range(p):
                    Kt[b, a] = SAt[a, b]
            _pinv_solve(S, Kt, h, p)
        # innovations first: theta must not change while they are formed
        for b in range(h):
            e = y[r0 + b]
            for q in range(p):
                e -= A[r0 + b, q] * theta[q]
            innov[b] = e
        for b in range(h):
            for a in range(p):
                theta[a] += Kt[b, a] * innov[b]
        # sigma <- sigma - K (A sigma) = sigma - Kt^T SAt^T
        for a in range(p):
            for c in range(a, p):
                s = 0.0
                for b in range(h):
                    s += Kt[b, a] * SAt[c, b] + Kt[b, c] * SAt[a, b]
                v = 0.5 * (sigma[a, c] + sigma[c, a]) - 0.5 * s
                sigma[a, c] = v
                sigma[c, a] = v
        for a in range(p):
            trace[i, a] = theta[a]


def rls_step_np(theta, sigma, A, y, omega):
    """One generalized RLS update; returns new ``(theta, sigma)``."""
    SAt = sigma @ A.T
    S = A @ SAt + omega
    S = 0.5 * (S + S.T)
    try:
        c = np.linalg.cholesky(S)
        smax = np.max(np.abs(np.diag(S))) if S.size else 0.0
        if S.size and np.min(np.diag(c)) ** 2 <= S.shape[0] * np.finfo(float).eps * smax:
            raise np.linalg.LinAlgError
        Kt = cho_solve((c, True), SAt.T)
    except np.linalg.LinAlgError:
        Kt = pinv_sym(S) @ SAt.T
    theta = theta + Kt.T @ (y - A @ theta)
    sigma = sigma - Kt.T @ SAt.T
    return theta, 0.5 * (sigma + sigma.T)


def rls_sweep(theta0, sigma0, A, y, row_off, Lrows=None, backend=None):
    """Apply the RLS update for every window in time order.

    ``Lrows`` given means the semi-weighted gain ``Omega_k = L_k L_k^T``;
    ``None`` uses ``Omega_k = I``.

    Returns
    -------
    theta, sigma, trace
        Final estimate, final ``Sigma`` and the estimate after each window.
    """
    n_win = row_off.size - 1
    theta = np.array(theta0, dtype=np.float64)
    sigma = np.array(sigma0, dtype=np.float64)
    trace = np.empty((n_win, theta.size))
    if resolve(backend) == "numba":
        weighted = Lrows is not None
        L = Lrows if weighted else np.zeros((0, 0))
        _rls_nb(theta, sigma, A, y, row_off, L, weighted, trace)
        return theta, sigma, trace
    for i in range(n_win):
        rows = slice(row_off[i], row_off[i + 1])
        Ab = A[rows]
        if Lrows is None:
            omega = np.eye(Ab.shape[0])
        else:
            omega = Lrows[rows] @ Lrows[rows].T
        theta, sigma = rls_step_np(theta, sigma, Ab, y[rows], omega)
        trace[i] = theta
    return theta, sigma, trace


# ------------------------------------------------- semi-weighted normal eqs


@njit
def _sw_normal_nb(A, y, Lrows, row_off, G, b):
    p = A.shape[1]
    eps = np.finfo(np.float64).eps
    hmax = 0
    for i in range(row_off.size - 1):
        hmax = max(hmax, row_off[i + 1] - row_off[i])
    S = np.empty((hmax, hmax))
    X = np.empty((hmax, p + 1))
    Lc = np.empty((hmax, hmax))
    for i in range(row_off.size - 1):
        r0 = row_off[i]
        h = row_off[i + 1] - r0
        for a in range(h):
            for c in range(a, h):
                s = 0.0
                for q in range(Lrows.shape[1]):
                    s += Lrows[r0 + a, q] * Lrows[r0 + c, q]
                S[a, c] = s
                S[c, a] = s
        smax = 0.0
        for a in range(h):
            smax = max(smax, S[a, a])
        for a in range(h):
            for q in range(p):
                X[a, q] = A[r0 + a, q]
            X[a, p] = y[r0 + a]
        if not _chol_solve_inplace(S, X, h, p + 1, h * eps * smax, Lc):
            for a in range(h):
                for q in range(p):
                    X[a, q] = A[r0 + a, q]
                X[a, p] = y[r0 + a]
            _pinv_solve(S, X, h, p + 1)
        for q in range(p):
            for t in range(p):
                s = 0.0
                for a in range(h):
                    s += A[r0 + a, q] * X[a, t]
                G[q, t] += s
            s = 0.0
            for a in range(h):
                s += A[r0 + a, q] * X[a, p]
            b[q] += s


def _sw_normal_np(A, y, Lrows, height_groups):
    p = A.shape[1]
    G = np.zeros((p, p))
    b = np.zeros(p)
    for rows in height_groups:
        Lb = Lrows[rows]
        S = Lb @ np.swapaxes(Lb, 1, 2)
        rhs = np.concatenate([A[rows], y[rows][:, :, None]], axis=2)
        try:
            c = np.linalg.cholesky(S)
            d = np.diagonal(c, axis1=1, axis2=2) ** 2
            smax = np.max(np.diagonal(S, axis1=1, axis2=2), axis=1)
            if np.any(np.min(d, axis=1) <= S.shape[1] * np.finfo(float).eps * smax):
                raise np.linalg.LinAlgError
            X = np.linalg.solve(S, rhs)
        except np.linalg.LinAlgError:
            X = pinv_sym_batched(S) @ rhs
        Ab = A[rows].reshape(-1, p)
        X = X.reshape(-1, p + 1)
        G += Ab.T @ X[:, :p]
        b += Ab.T @ X[:, p]
    return G, b


def sw_normal(A, y, Lrows, row_off, height_groups, backend=None):
    """Normal equations ``(A^T W A, A^T W y)`` with ``W = blkdiag((L_k L_k^T)^+)``."""
    if resolve(backend) == "numpy":
        return _sw_normal_np(A, y, Lrows, height_groups)
    p = A.shape[1]
    G = np.zeros((p, p))
    b = np.zeros(p)
    _sw_normal_nb(A, y, Lrows, row_off, G, b)
    return G, b


# ------------------------------------------------------------------ P2 band


def band_width(row_off, P):
    """Upper bandwidth (in rows) of a block matrix coupling windows < P apart."""
    n_win = row_off.size - 1
    last = np.minimum(np.arange(n_win) + P - 1, n_win - 1)
    return int(np.max(row_off[last + 1] - 1 - row_off[:-1]))


@njit
def _p2_band_nb(M_flat, M_off, m, n_e, lags, row_off, u, ab):
    n_win = m.size
    P = lags.shape[0]
    for i in range(n_win):
        mi = m[i]
        Mi = M_flat[M_off[i] : M_off[i] + mi * n_e].reshape(mi, n_e)
        for j in range(P):
            l = i + j
            if l >= n_win:
                break
            ml = m[l]
            Ml = M_flat[M_off[l] : M_off[l] + ml * n_e].reshape(ml, n_e)
            X = Mi @ lags[j] @ Ml.T
            r = row_off[i]
            for c in range(mi):
                for a in range(c, mi):
                    s = row_off[l]
                    for d in range(ml):
                        for b in range(d, ml):
                            if j > 0 or s >= r:
                                ab[u + r - s, s] = X[a, b] * X[c, d] + X[a, d] * X[c, b]
                            s += 1
                    r += 1


def _p2_band_np(M_blocks, lags, row_off, u):
    n_win = len(M_blocks)
    n = int(row_off[-1])
    ab = np.zeros((u + 1, n))
    for i in range(n_win):
        Mi = M_blocks[i]
        a, c = tril_pairs(Mi.shape[0])
        rows = row_off[i] + np.arange(a.size)
        for j in range(lags.shape[0]):
            l = i + j
            if l >= n_win:
                break
            Ml = M_blocks[l]
            X = Mi @ lags[j] @ Ml.T
            b, d = tril_pairs(Ml.shape[0])
            blk = X[a][:, b] * X[c][:, d] + X[a][:, d] * X[c][:, b]
            cols = row_off[l] + np.arange(b.size)
            rr, ss = np.meshgrid(rows, cols, indexing="ij")
            keep = ss >= rr
            ab[u + rr[keep] - ss[keep], ss[keep]] = blk[keep]
    return ab


def p2_band(packed, lags, backend=None):
    """Upper band storage (``scipy.linalg.cholesky_banded`` layout) of P2.

    Parameters
    ----------
    packed : dict
        Packed design arrays (noise maps ``M_k`` and row offsets).
    lags : ndarray, shape (P, n_e, n_e)
        ``E[E_k E_{k+j}^T]`` for ``j = 0 .. P-1``.

    Returns
    -------
    ab : ndarray, shape (u + 1, n_rows)
    u : int
    """
    row_off = packed["row_off"]
    u = band_width(row_off, lags.shape[0])
    if resolve(backend) == "numpy":
        return _p2_band_np(packed["M_blocks"], lags, row_off, u), u
    ab = np.zeros((u + 1, int(row_off[-1])))
    _p2_band_nb(
        packed["M_flat"], packed["M_off"], packed["m"], packed["n_e"],
        np.ascontiguousarray(lags), row_off, u, ab,
    )
    return ab, u
