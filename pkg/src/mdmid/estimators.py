"""Regression assembly and the batch (non-recursive) covariance estimators.

Every window ``k = N .. tau-L+1`` contributes

    y_k = Xi vec(Zt_k Zt_k^T) = Ad_k theta + L_k eta_k

with ``theta`` the unique entries of ``(Q, R)`` (see
:class:`~mdmid.vecmaps.CovLayout`), ``Ad_k = Xi (M_k (x) M_k) Psi`` and
``L_k = Xi (M_k (x) M_k)`` where ``M_k`` is the window's noise map. Stacking
all windows gives ``y = A theta + L eta`` which is solved by ordinary (``uw``),
block-diagonally weighted (``sw``) or fully weighted (``we``) least squares.
"""

import time
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cho_solve_banded, cholesky_banded

from . import kernels
from .errors import IdentifiabilityError, ModelError, WeightingError
from .moments import lag_noise_cov
from .stacks import build_kernels
from .vecmaps import CovLayout, replication_matrix, tril_pairs, tril_vec_positions


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


@dataclass(frozen=True, eq=False)
class RegressionDesign:
    """Model-dependent part of the regression, reusable across data sets.

    Holds the per-window kernels, the stacked design ``A`` (rows of all
    ``Ad_k``), the stacked shaping rows ``Lrows`` (rows of all ``L_k``; the
    block-diagonal matrix is implied by ``row_off``) and packed arrays for
    the hot loops.
    """

    model: object
    L: int
    N: int
    layout: CovLayout
    psi: sp.csr_matrix
    windows: tuple
    ks: np.ndarray
    row_off: np.ndarray
    A: np.ndarray
    Lrows: np.ndarray
    packed: dict = field(repr=False)

    @property
    def P(self):
        return self.L + self.N

    @property
    def n_windows(self):
        return len(self.windows)

    @property
    def n_e(self):
        return (self.P - 1) * self.model.n_w + self.P * self.model.n_v

    @classmethod
    def build(cls, model, L, N):
        if L < 1 or N < 0:
            raise ValueError("need L >= 1 and N >= 0")
        model.check()
        tau = model.tau
        if tau < N + L - 1:
            raise ValueError(f"horizon tau={tau} too short for L={L}, N={N}")
        P = L + N
        layout = CovLayout(model.n_w, model.n_v)
        psi = replication_matrix(model.n_w, model.n_v, P)
        ks = np.arange(N, tau - L + 2)
        windows = tuple(build_kernels(model, int(k), L, N) for k in ks)

        m = np.array([w.M.shape[0] for w in windows], dtype=np.int64)
        heights = m * (m + 1) // 2
        row_off = np.concatenate([[0], np.cumsum(heights)]).astype(np.int64)
        res_off = np.concatenate([[0], np.cumsum(m)]).astype(np.int64)

        Lblocks = [np.kron(w.M, w.M)[tril_vec_positions(w.M.shape[0])] for w in windows]
        Lrows = np.ascontiguousarray(np.vstack(Lblocks))
        A = np.ascontiguousarray((psi.T @ Lrows.T).T)

        z_start = np.concatenate([[0], np.cumsum(model.nz)]).astype(np.int64)
        u_start = np.concatenate([[0], np.cumsum(model.nu)]).astype(np.int64)
        n_u = int(u_start[-1])
        didx = []
        for k in ks:
            first = k - N
            ui = np.arange(u_start[first], u_start[first + P - 1])
            zi = n_u + np.arange(z_start[first], z_start[first + P])
            didx.append(np.concatenate([ui, zi]).astype(np.int64))
        width = np.array([d.size for d in didx], dtype=np.int64)
        ops = [np.ascontiguousarray(w.data_map) for w in windows]
        Ms = [np.ascontiguousarray(w.M) for w in windows]

        packed = {
            "m": m,
            "width": width,
            "op_flat": np.concatenate([o.ravel() for o in ops]),
            "op_off": np.concatenate([[0], np.cumsum([o.size for o in ops])]).astype(np.int64),
            "didx": np.concatenate(didx),
            "didx_off": np.concatenate([[0], np.cumsum(width)]).astype(np.int64),
            "res_off": res_off,
            "row_off": row_off,
            "n_res": int(res_off[-1]),
            "n_rows": int(row_off[-1]),
            "M_flat": np.concatenate([x.ravel() for x in Ms]),
            "M_off": np.concatenate([[0], np.cumsum([x.size for x in Ms])]).astype(np.int64),
            "M_blocks": Ms,
            "n_e": (P - 1) * model.n_w + P * model.n_v,
            "groups": _shape_groups(ops, didx, res_off, row_off),
            "height_groups": _height_groups(row_off),
        }
        return cls(
            model=model, L=L, N=N, layout=layout, psi=psi, windows=windows, ks=ks,
            row_off=row_off, A=A, Lrows=Lrows, packed=packed,
        )

    def system(self, traj, backend=None):
        """Evaluate the observation vector for one trajectory."""
        data = np.concatenate([-traj.u_flat, traj.z_flat])
        expected = self.packed["didx"].max() + 1 if self.packed["didx"].size else 0
        if data.size < expected:
            raise ModelError("trajectory shorter than the model windows")
        res, y = kernels.observations(self.packed, data, backend)
        return RegressionSystem(
            y=y, A=self.A, Lrows=self.Lrows, row_off=self.row_off, layout=self.layout,
            ks=self.ks, residuals=res, design=self,
        )


def _shape_groups(ops, didx, res_off, row_off):
    by_shape = {}
    for i, o in enumerate(ops):
        by_shape.setdefault(o.shape, []).append(i)
    groups = []
    for (mi, _), idx in by_shape.items():
        idx = np.array(idx)
        groups.append(
            {
                "ops": np.stack([ops[i] for i in idx]),
                "didx": np.stack([didx[i] for i in idx]),
                "res_idx": res_off[idx][:, None] + np.arange(mi),
                "row_idx": row_off[idx][:, None] + np.arange(mi * (mi + 1) // 2),
            }
        )
    return groups


def _height_groups(row_off):
    heights = np.diff(row_off)
    out = []
    for h in np.unique(heights):
        idx = np.flatnonzero(heights == h)
        out.append(row_off[idx][:, None] + np.arange(h))
    return out


@dataclass(frozen=True, eq=False)
class RegressionSystem:
    """Stacked regression ``y = A theta + L eta`` for one data set.

    Block ``i`` (window start ``ks[i]``) occupies rows
    ``row_off[i]:row_off[i+1]`` of ``y``, ``A`` and ``Lrows``; the
    block-diagonal shaping matrix ``L`` is implied by those offsets. Systems
    produced by :meth:`RegressionDesign.system` share ``A`` and ``Lrows`` with
    their design, which is also needed by :func:`build_P2`.
    """

    y: np.ndarray
    A: np.ndarray
    Lrows: np.ndarray
    row_off: np.ndarray
    layout: CovLayout
    ks: np.ndarray = None
    residuals: np.ndarray = None
    design: RegressionDesign = None

    @classmethod
    def from_blocks(cls, ys, As, Ls, layout, ks=None):
        """Stack per-window blocks ``(y_k, Ad_k, L_k)`` supplied directly."""
        heights = [np.size(y) for y in ys]
        return cls(
            y=np.concatenate([np.ravel(y) for y in ys]).astype(float),
            A=np.ascontiguousarray(np.vstack(As), dtype=float),
            Lrows=np.ascontiguousarray(np.vstack(Ls), dtype=float),
            row_off=np.concatenate([[0], np.cumsum(heights)]).astype(np.int64),
            layout=layout,
            ks=np.arange(len(ys)) if ks is None else np.asarray(ks),
        )

    @property
    def n_windows(self):
        return self.row_off.size - 1

    @cached_property
    def height_groups(self):
        if self.design is not None:
            return self.design.packed["height_groups"]
        return _height_groups(self.row_off)

    def residual(self, i):
        off = self.design.packed["res_off"]
        return self.residuals[off[i] : off[i + 1]]

    def block(self, i):
        """``(y_k, Ad_k, L_k)`` of window ``i``."""
        rows = slice(self.row_off[i], self.row_off[i + 1])
        return self.y[rows], self.A[rows], self.Lrows[rows]

    def L_matrix(self):
        """Block-diagonal shaping matrix as a sparse matrix."""
        blocks = [self.block(i)[2] for i in range(self.n_windows)]
        return sp.block_diag(blocks, format="csr")

    def with_observations(self, y):
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape != self.y.shape:
            raise ValueError(f"expected {self.y.size} observations, got {y.size}")
        return replace(self, y=y)


def build_regression(model, traj, L, N, design=None, backend=None):
    if design is None:
        design = RegressionDesign.build(model, L, N)
    return design.system(traj, backend)


def residual(model, traj, k, L, N):
    """Single-window residual ``A_k B_k [-U; Z]`` (reference path)."""
    from .stacks import window_data

    kern = build_kernels(model, k, L, N)
    U, Z = window_data(traj, model, kern.index)
    return kern.A @ kern.B @ np.concatenate([-U, Z])


@dataclass(frozen=True, eq=False)
class EstimateReport:
    """Estimate of the unique covariance entries with its reported covariance."""

    method: str
    theta: np.ndarray
    cov: np.ndarray
    layout: CovLayout
    elapsed: float = float("nan")

    @property
    def Q(self):
        return self.layout.unpack(self.theta)[0]

    @property
    def R(self):
        return self.layout.unpack(self.theta)[1]

    @property
    def cov_diag(self):
        return np.diag(self.cov)


def project_psd(report):
    """Clip negative eigenvalues of the estimated Q and R to zero."""

    def clip(a):
        w, v = np.linalg.eigh(a)
        return (v * np.clip(w, 0.0, None)) @ v.T

    Q, R = report.layout.unpack(report.theta)
    return replace(report, theta=report.layout.pack(clip(Q), clip(R)))


def _normal_solve(G, b, method):
    """Solve the p x p normal equations, returning ``(theta, G^-1)``."""
    G = 0.5 * (G + G.T)
    w = np.linalg.eigvalsh(G)
    if w[-1] <= 0 or w[0] <= G.shape[0] * np.finfo(float).eps * w[-1]:
        raise IdentifiabilityError(
            f"{method}: design matrix is rank deficient (eigenvalues of the normal "
            f"matrix span {w[0]:.3g}..{w[-1]:.3g})"
        )
    c = cho_factor(G)
    return cho_solve(c, b), cho_solve(c, np.eye(G.shape[0]))


def estimate_unweighted(system):
    """Ordinary least squares; reported covariance ``(A^T A)^-1``."""
    with _Timer() as t:
        A = system.A
        theta, cov = _normal_solve(A.T @ A, A.T @ system.y, "uw-nr")
    return EstimateReport("uw-nr", theta, cov, system.layout, t.elapsed)


def build_S2(system):
    """Block-diagonal ``S2 = L L^T`` as a sparse matrix."""
    L = system.L_matrix()
    return (L @ L.T).tocsr()


def estimate_semiweighted(system, backend=None):
    """Least squares weighted by the block-diagonal ``(L L^T)^+``."""
    with _Timer() as t:
        G, b = kernels.sw_normal(
            system.A, system.y, system.Lrows, system.row_off, system.height_groups, backend,
        )
        theta, cov = _normal_solve(G, b, "sw-nr")
    return EstimateReport("sw-nr", theta, cov, system.layout, t.elapsed)


@dataclass(frozen=True, eq=False)
class BandedSym:
    """Symmetric matrix in upper band storage: ``ab[u + i - j, j] = a[i, j]``, ``i <= j``."""

    ab: np.ndarray
    u: int

    @property
    def n(self):
        return self.ab.shape[1]

    def to_dense(self):
        n, u = self.n, self.u
        out = np.zeros((n, n))
        for d in range(u + 1):
            i = np.arange(n - d)
            out[i, i + d] = self.ab[u - d, d:]
            out[i + d, i] = self.ab[u - d, d:]
        return out

    @classmethod
    def from_dense(cls, a, u=None):
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if u is None:
            nz = np.nonzero(np.triu(a))
            u = int(np.max(nz[1] - nz[0])) if nz[0].size else 0
        ab = np.zeros((u + 1, n))
        for d in range(u + 1):
            i = np.arange(n - d)
            ab[u - d, d:] = a[i, i + d]
        return cls(ab, u)


def build_P2(system, Q, R, backend=None):
    """Covariance of the stacked regression error for given ``(Q, R)``.

    Window blocks further than ``P - 1`` steps apart are zero, so the
    result is returned in band storage.
    """
    if system.design is None:
        raise ValueError("build_P2 needs a system built from a RegressionDesign")
    P = system.design.P
    lags = np.stack([lag_noise_cov(Q, R, P, j) for j in range(P)])
    ab, u = kernels.p2_band(system.design.packed, lags, backend)
    return BandedSym(ab, u)


def build_P2_dense(system, Q, R):
    """Reference ``L blockToeplitz(eta_cov) L^T`` from the explicit Kronecker forms."""
    from .moments import eta_cov

    design = system.design
    P = design.P
    blocks = [eta_cov(Q, R, P, j) for j in range(P)]
    n = int(system.row_off[-1])
    out = np.zeros((n, n))
    for i in range(system.n_windows):
        ri = slice(system.row_off[i], system.row_off[i + 1])
        for j in range(P):
            l = i + j
            if l >= system.n_windows:
                break
            rl = slice(system.row_off[l], system.row_off[l + 1])
            blk = system.Lrows[ri] @ blocks[j] @ system.Lrows[rl].T
            out[ri, rl] = blk
            out[rl, ri] = blk.T
    return out


def _factor_banded(ab, u, delta0=1e-10, max_tries=20):
    """Cholesky of a banded SPD matrix, adding escalating diagonal jitter if needed."""
    mean_diag = float(np.mean(ab[u])) if ab.shape[1] else 0.0
    scale = mean_diag if mean_diag > 0 else 1.0
    try:
        return cholesky_banded(ab, lower=False), 0.0
    except LinAlgError:
        pass
    delta = delta0
    for _ in range(max_tries):
        trial = ab.copy()
        trial[u] += delta * scale
        try:
            return cholesky_banded(trial, lower=False), delta
        except LinAlgError:
            delta *= 10.0
    raise WeightingError("weighting matrix is numerically singular beyond the jitter policy")


def estimate_weighted(system, seed=None, seed_method="uw-nr", weight=None, backend=None):
    """Generalized least squares with the Gaussian regression-error covariance.

    Parameters
    ----------
    seed : EstimateReport, optional
        Covariance estimate used to evaluate the weighting matrix; computed
        with ``seed_method`` (``"uw-nr"`` or ``"sw-nr"``) when missing.
    weight : BandedSym or ndarray, optional
        Use this weighting matrix instead of building one from the seed.

    The seed estimation time is included in the reported elapsed time.
    """
    with _Timer() as t:
        if weight is None:
            if seed is None:
                if seed_method == "uw-nr":
                    seed = estimate_unweighted(system)
                elif seed_method == "sw-nr":
                    seed = estimate_semiweighted(system)
                else:
                    raise ValueError(f"unknown seed method {seed_method!r}")
            weight = build_P2(system, seed.Q, seed.R, backend)
        elif not isinstance(weight, BandedSym):
            weight = BandedSym.from_dense(weight.toarray() if sp.issparse(weight) else weight)
        # symmetric by construction: only the upper band is stored
        cb, jitter = _factor_banded(weight.ab, weight.u)
        A = system.A
        X = cho_solve_banded((cb, False), np.column_stack([A, system.y]))
        G = A.T @ X[:, :-1]
        b = A.T @ X[:, -1]
        theta, cov = _normal_solve(G, b, "we-nr")
    return EstimateReport("we-nr", theta, cov, system.layout, t.elapsed)
