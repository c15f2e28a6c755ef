"""vec/Kronecker helpers, replication and unification matrices.

All vectorizations are column-major, so ``vec(a @ s @ b.T) = kron(b, a) @ vec(s)``
and ``vec(outer(a, b)) = kron(b, a)``.
"""

from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np
import scipy.sparse as sp


def vec(a):
    return np.asarray(a).reshape(-1, order="F")


def unvec(v, rows, cols):
    v = np.asarray(v)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape vector of length {v.size} into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def kron_power(a, n):
    if n < 1:
        raise ValueError("Kronecker power needs n >= 1")
    a = np.atleast_2d(a)
    return reduce(np.kron, [a] * n)


@lru_cache(maxsize=None)
def tril_pairs(m):
    """Row and column indices of the lower triangle in column-major order."""
    rows, cols = [], []
    for c in range(m):
        for r in range(c, m):
            rows.append(r)
            cols.append(c)
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def tril_vec_positions(m):
    """0-based positions in ``vec`` of an m x m matrix selected by the unification matrix."""
    r, c = tril_pairs(m)
    return r + m * c


def unification_matrix(m):
    """Sparse 0/1 selector of shape ``(m(m+1)/2, m^2)`` picking the lower triangle."""
    if m < 1:
        raise ValueError("m must be >= 1")
    pos = tril_vec_positions(m)
    n = pos.size
    return sp.csr_matrix((np.ones(n), (np.arange(n), pos)), shape=(n, m * m))


def sym_from_tril(values, m):
    """Rebuild a symmetric matrix from its column-major lower-triangle entries."""
    r, c = tril_pairs(m)
    s = np.zeros((m, m))
    s[r, c] = values
    s[c, r] = values
    return s


@dataclass(frozen=True)
class CovLayout:
    """Ordering of the unique entries of ``(Q, R)``.

    The Q block comes first, then the R block; within each block the lower
    triangle is listed column by column. Labels use 1-based ``(row, col)``
    with ``row <= col`` (``"R(1,2)"`` is the off-diagonal of a 2x2 R); a
    scalar covariance is labelled by its bare name.
    """

    n_w: int
    n_v: int

    @property
    def n_q(self):
        return self.n_w * (self.n_w + 1) // 2

    @property
    def size(self):
        return self.n_q + self.n_v * (self.n_v + 1) // 2

    def entries(self):
        """List of ``(matrix, row, col)`` with 0-based lower-triangle indices."""
        out = []
        for name, n in (("Q", self.n_w), ("R", self.n_v)):
            r, c = tril_pairs(n)
            out.extend((name, int(i), int(j)) for i, j in zip(r, c))
        return out

    def labels(self):
        labels = []
        for name, i, j in self.entries():
            n = self.n_w if name == "Q" else self.n_v
            labels.append(name if n == 1 else f"{name}({j + 1},{i + 1})")
        return labels

    def index_of(self, label):
        return self.labels().index(label)

    def pack(self, Q, R):
        Q = np.atleast_2d(Q)
        R = np.atleast_2d(R)
        rq, cq = tril_pairs(self.n_w)
        rr, cr = tril_pairs(self.n_v)
        return np.concatenate([Q[rq, cq], R[rr, cr]])

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.size:
            raise ValueError(f"expected {self.size} entries, got {theta.size}")
        return (
            sym_from_tril(theta[: self.n_q], self.n_w),
            sym_from_tril(theta[self.n_q :], self.n_v),
        )


def noise_cov(Q, R, P):
    """Covariance ``blkdiag(I_{P-1} (x) Q, I_P (x) R)`` of the stacked noise window."""
    Q = np.atleast_2d(Q)
    R = np.atleast_2d(R)
    n_w, n_v = Q.shape[0], R.shape[0]
    n = (P - 1) * n_w + P * n_v
    out = np.zeros((n, n))
    for i in range(P - 1):
        s = slice(i * n_w, (i + 1) * n_w)
        out[s, s] = Q
    base = (P - 1) * n_w
    for i in range(P):
        s = slice(base + i * n_v, base + (i + 1) * n_v)
        out[s, s] = R
    return out


def replication_matrix(n_w, n_v, P):
    """Sparse 0/1 matrix mapping unique (Q, R) entries to ``vec(noise_cov(Q, R, P))``."""
    if P < 1:
        raise ValueError("P must be >= 1")
    layout = CovLayout(n_w, n_v)
    n = (P - 1) * n_w + P * n_v
    rows, cols = [], []
    for idx, (name, i, j) in enumerate(layout.entries()):
        if name == "Q":
            starts = [b * n_w for b in range(P - 1)]
        else:
            starts = [(P - 1) * n_w + b * n_v for b in range(P)]
        for s in starts:
            a, b = s + i, s + j
            rows.append(a + n * b)
            cols.append(idx)
            if a != b:
                rows.append(b + n * a)
                cols.append(idx)
    return sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n * n, layout.size)
    )
