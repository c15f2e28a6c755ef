"""Stacked window operators of the measurement difference residual.

For a window start ``k`` with prediction depth ``L`` and shift ``N``
(``P = L + N``) the residual

    Zt_k = Z_k^L - Hpred Z_{k-N}^L - A_w G_{k-N}^{P-1} U_{k-N}^{P-1}

is linear both in the data ``[-U; Z]`` (through ``A_k B_k``) and in the noise
window ``[W_{k-N}^{P-1}; V_{k-N}^P]`` (through ``A_k C_k``). Every function here
honours per-step measurement and control dimensions; degenerate windows
(``L = 1`` or ``N = 0``) produce zero-width blocks instead of special cases.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import HorizonError, RankDeficiencyError
from .linalg import pinv


def _require(model, first, last):
    if first < 0 or last > model.tau:
        raise HorizonError(f"window [{first}, {last}] outside horizon 0..{model.tau}")


def _blkdiag(blocks, rows, cols):
    # scipy's block_diag drops the shape of empty inputs; keep it explicit
    if not blocks:
        return np.zeros((rows, cols))
    out = block_diag(*blocks)
    return out.reshape(rows, cols)


@dataclass(frozen=True)
class StackIndex:
    """Prefix offsets of the per-step blocks inside one window.

    ``z_off`` has ``P + 1`` entries for measurements ``k-N .. k+L-1``,
    ``u_off`` has ``P`` entries for controls ``k-N .. k+L-2``; the last
    offset is the stacked dimension.
    """

    k: int
    L: int
    N: int
    z_off: np.ndarray
    u_off: np.ndarray

    @classmethod
    def of(cls, model, k, L, N):
        P = L + N
        _require(model, k - N, k + L - 1)
        nz = [model.nz[k - N + i] for i in range(P)]
        nu = [model.nu[k - N + i] for i in range(P - 1)]
        return cls(
            k=k,
            L=L,
            N=N,
            z_off=np.concatenate([[0], np.cumsum(nz, dtype=np.int64)]),
            u_off=np.concatenate([[0], np.cumsum(nu, dtype=np.int64)]),
        )

    @property
    def n_z_past(self):
        """Stacked dimension of ``Z_{k-N}^L``."""
        return int(self.z_off[self.L])

    @property
    def n_z_current(self):
        """Stacked dimension of ``Z_k^L``."""
        return int(self.z_off[-1] - self.z_off[self.N])

    @property
    def n_z_all(self):
        return int(self.z_off[-1])

    @property
    def n_u_all(self):
        return int(self.u_off[-1])


def transition_product(model, k, j):
    """``F_{k+j-1} ... F_{k+1} F_k``; identity for ``j = 0``."""
    if j < 0:
        raise ValueError("j must be >= 0")
    if k < 0 or k + j > model.tau:
        raise HorizonError(f"product F_{k}..F_{k + j - 1} outside horizon")
    out = np.eye(model.n_x)
    for i in range(j):
        out = model.F[k + i] @ out
    return out


def build_O(model, k, L):
    _require(model, k, k + L - 1)
    blocks = []
    phi = np.eye(model.n_x)
    for i in range(L):
        if i:
            phi = model.F[k + i - 1] @ phi
        blocks.append(model.H[k + i] @ phi)
    return np.vstack(blocks)


def build_Gamma(model, k, L):
    """Strictly block-lower-triangular map from per-step state inputs to ``Z_k^L``."""
    _require(model, k, k + L - 1)
    n_x = model.n_x
    rows = [model.nz[k + i] for i in range(L)]
    out = np.zeros((sum(rows), (L - 1) * n_x))
    r0 = 0
    for i in range(L):
        for j in range(i):
            out[r0 : r0 + rows[i], j * n_x : (j + 1) * n_x] = model.H[
                k + i
            ] @ transition_product(model, k + j + 1, i - j - 1)
        r0 += rows[i]
    return out


def build_calG(model, k, L):
    _require(model, k, k + L - 1)
    blocks = [model.G[k + i] for i in range(L - 1)]
    return _blkdiag(blocks, (L - 1) * model.n_x, sum(model.nu[k + i] for i in range(L - 1)))


def build_scrE(model, k, L):
    _require(model, k, k + L - 1)
    blocks = [model.E[k + i] for i in range(L - 1)]
    return _blkdiag(blocks, (L - 1) * model.n_x, (L - 1) * model.n_w)


def build_calD(model, k, L):
    _require(model, k, k + L - 1)
    blocks = [model.D[k + i] for i in range(L)]
    return _blkdiag(blocks, sum(model.nz[k + i] for i in range(L)), L * model.n_v)


def predictor_gain(model, k, L, N):
    """N-step measurement predictor ``O_k^L F_{k-N}^N pinv(O_{k-N}^L)``."""
    _require(model, k - N, k + L - 1)
    past = build_O(model, k - N, L)
    past_pinv, rank = pinv(past)
    if rank < model.n_x:
        raise RankDeficiencyError(k - N, rank, model.n_x)
    return build_O(model, k, L) @ transition_product(model, k - N, N) @ past_pinv


def build_Aw_Av(model, k, L, N):
    """Return ``(A_w, A_v)`` acting on state-noise effects and on ``Z_{k-N}^P``."""
    idx = StackIndex.of(model, k, L, N)
    n_x = model.n_x
    O_k = build_O(model, k, L)
    Gamma_k = build_Gamma(model, k, L)
    m = O_k.shape[0]
    if N == 0:
        O_pinv, _ = pinv(O_k)
        A_v = np.eye(m) - O_k @ O_pinv
        return A_v @ Gamma_k, A_v

    Hp = predictor_gain(model, k, L, N)
    Phi = np.hstack(
        [transition_product(model, k - N + 1 + i, N - 1 - i) for i in range(N)]
    )
    A_w = np.hstack([O_k @ Phi, Gamma_k])
    A_w[:, : (L - 1) * n_x] -= Hp @ build_Gamma(model, k - N, L)

    A_v = np.zeros((m, idx.n_z_all))
    A_v[:, idx.z_off[N] :] += np.eye(m)
    A_v[:, : idx.n_z_past] -= Hp
    return A_w, A_v


@dataclass(frozen=True, eq=False)
class StackKernels:
    """Operators of one window.

    Attributes
    ----------
    A, B, C : ndarray
        ``A = [A_w, A_v]``, ``B = blkdiag(G_{k-N}^{P-1}, I)``,
        ``C = blkdiag(E_{k-N}^{P-1}, D_{k-N}^P)``.
    M : ndarray
        Noise map ``A C`` taking ``[W; V]`` to the residual.
    data_map : ndarray
        ``A B`` taking ``[-U; Z]`` to the residual.
    control_map : ndarray
        ``A_w G_{k-N}^{P-1}``.
    """

    index: StackIndex
    A_w: np.ndarray
    A_v: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    M: np.ndarray
    data_map: np.ndarray
    control_map: np.ndarray

    @property
    def k(self):
        return self.index.k


def build_kernels(model, k, L, N):
    if L < 1 or N < 0:
        raise ValueError("need L >= 1 and N >= 0")
    idx = StackIndex.of(model, k, L, N)
    P = L + N
    A_w, A_v = build_Aw_Av(model, k, L, N)
    calG = build_calG(model, k - N, P)
    scrE = build_scrE(model, k - N, P)
    calD = build_calD(model, k - N, P)
    A = np.hstack([A_w, A_v])
    B = _blkdiag([calG, np.eye(idx.n_z_all)], calG.shape[0] + idx.n_z_all, calG.shape[1] + idx.n_z_all)
    C = _blkdiag([scrE, calD], scrE.shape[0] + calD.shape[0], scrE.shape[1] + calD.shape[1])
    control_map = A_w @ calG
    return StackKernels(
        index=idx,
        A_w=A_w,
        A_v=A_v,
        A=A,
        B=B,
        C=C,
        M=A @ C,
        data_map=np.hstack([control_map, A_v]),
        control_map=control_map,
    )


def window_data(traj, model, idx):
    """Stacked ``(U_{k-N}^{P-1}, Z_{k-N}^P)`` of one window."""
    first = idx.k - idx.N
    P = idx.L + idx.N
    parts_u = [np.ravel(traj.u[first + i]) for i in range(P - 1)]
    U = np.concatenate(parts_u) if parts_u else np.zeros(0)
    Z = np.concatenate([np.ravel(traj.z[first + i]) for i in range(P)])
    return U, Z
