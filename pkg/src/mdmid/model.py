"""Linear time-varying state-space models with time-varying dimensions.

The model is

    x[k+1] = F[k] x[k] + G[k] u[k] + E[k] w[k],   k = 0 .. tau-1
    z[k]   = H[k] x[k] + D[k] v[k],               k = 0 .. tau

with ``w ~ N(0, Q)`` and ``v ~ N(0, R)`` white and mutually independent.
The measurement dimension ``nz[k]`` and control dimension ``nu[k]`` may change
with ``k``; ``nu[k] = 0`` means no control at that step.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonError, ModelError
from .linalg import numerical_rank


def _as_matrix(a, rows=None, cols=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        # a 1-D input is a row when the caller expects one row, a column otherwise
        a = a.reshape(1, -1) if rows == 1 and cols != 1 else a.reshape(-1, 1)
    return a


def _evaluate(rule, k):
    return rule(k) if callable(rule) else rule


@dataclass(frozen=True, eq=False)
class LtvModel:
    """Per-step system matrices of an LTV model.

    ``F``, ``G``, ``E`` hold ``tau`` matrices (steps ``0..tau-1``); ``H`` and
    ``D`` hold ``tau + 1`` matrices (steps ``0..tau``). Dimensions that are not
    given are inferred from the matrices. Construction never raises on bad
    shapes; use :func:`validate` to get a report.
    """

    F: tuple
    G: tuple
    E: tuple
    H: tuple
    D: tuple
    n_x: int = None
    n_w: int = None
    n_v: int = None
    nz: tuple = None
    nu: tuple = None

    def __post_init__(self):
        set_ = object.__setattr__
        F = tuple(_as_matrix(a) for a in self.F)
        n_x = self.n_x if self.n_x is not None else F[0].shape[0]
        H = tuple(_as_matrix(a, cols=n_x) for a in self.H)
        G = tuple(_as_matrix(a, rows=n_x) for a in self.G)
        E = tuple(_as_matrix(a, rows=n_x) for a in self.E)
        D = tuple(_as_matrix(a) for a in self.D)
        set_(self, "F", F)
        set_(self, "G", G)
        set_(self, "E", E)
        set_(self, "H", H)
        set_(self, "D", D)
        set_(self, "n_x", int(n_x))
        if self.n_w is None:
            set_(self, "n_w", E[0].shape[1])
        if self.n_v is None:
            set_(self, "n_v", D[0].shape[1])
        nz = self.nz if self.nz is not None else [h.shape[0] for h in H]
        nu = self.nu if self.nu is not None else [g.shape[1] for g in G]
        set_(self, "nz", tuple(int(n) for n in nz))
        set_(self, "nu", tuple(int(n) for n in nu))

    @classmethod
    def from_rules(cls, tau, F, G, E, H, D, **dims):
        """Evaluate per-step rules into explicit matrices.

        Each of ``F, G, E, H, D`` is either a constant array or a callable
        ``k -> array``.
        """
        steps = range(tau)
        meas = range(tau + 1)
        return cls(
            F=[_evaluate(F, k) for k in steps],
            G=[_evaluate(G, k) for k in steps],
            E=[_evaluate(E, k) for k in steps],
            H=[_evaluate(H, k) for k in meas],
            D=[_evaluate(D, k) for k in meas],
            **dims,
        )

    @property
    def tau(self):
        return len(self.H) - 1

    def check(self):
        report = validate(self)
        if not report.ok:
            raise ModelError(str(report))


@dataclass(frozen=True)
class Violation:
    k: int
    name: str
    message: str

    def __str__(self):
        return f"{self.name} at k={self.k}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "model valid"
        return "; ".join(str(v) for v in self.violations)


def validate(model):
    """Check dimensions and finiteness of every per-step matrix.

    Returns a :class:`ValidationReport` listing each violation with its time
    index (``k = -1`` for whole-sequence problems such as wrong lengths).
    """
    out = []
    tau = model.tau
    n_x, n_w, n_v = model.n_x, model.n_w, model.n_v
    if tau < 1:
        out.append(Violation(-1, "H", "horizon must contain at least 2 measurements"))
    for name, seq, length in (
        ("F", model.F, tau),
        ("G", model.G, tau),
        ("E", model.E, tau),
        ("H", model.H, tau + 1),
        ("D", model.D, tau + 1),
        ("nz", model.nz, tau + 1),
        ("nu", model.nu, tau),
    ):
        if len(seq) != length:
            out.append(Violation(-1, name, f"expected {length} entries, got {len(seq)}"))

    def expect(name, k, a, shape):
        if a.shape != shape:
            out.append(Violation(k, name, f"shape {a.shape}, declared {shape}"))
        elif not np.all(np.isfinite(a)):
            out.append(Violation(k, name, "non-finite entry"))

    for k in range(min(tau, len(model.F), len(model.G), len(model.E), len(model.nu))):
        expect("F", k, model.F[k], (n_x, n_x))
        expect("G", k, model.G[k], (n_x, model.nu[k]))
        expect("E", k, model.E[k], (n_x, n_w))
    for k in range(min(tau + 1, len(model.H), len(model.D), len(model.nz))):
        expect("H", k, model.H[k], (model.nz[k], n_x))
        expect("D", k, model.D[k], (model.nz[k], n_v))
    return ValidationReport(tuple(out))


def observability_stack(model, k, depth):
    """Stack ``[H_k; H_{k+1} F_k; ...; H_{k+depth-1} F_{k+depth-2} ... F_k]``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if k < 0 or k + depth - 1 > model.tau:
        raise HorizonError(f"window [{k}, {k + depth - 1}] outside horizon 0..{model.tau}")
    blocks = []
    phi = np.eye(model.n_x)
    for i in range(depth):
        if i:
            phi = model.F[k + i - 1] @ phi
        blocks.append(model.H[k + i] @ phi)
    return np.vstack(blocks)


def check_observability(model, depth):
    """Full-column-rank flag of the depth-``depth`` stack for each admissible k."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return np.array(
        [
            numerical_rank(observability_stack(model, k, depth)) == model.n_x
            for k in range(model.tau - depth + 2)
        ]
    )


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """State and measurement noise covariances ``Q`` (n_w x n_w), ``R`` (n_v x n_v)."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", _as_matrix(self.Q))
        object.__setattr__(self, "R", _as_matrix(self.R))
        for name in ("Q", "R"):
            a = getattr(self, name)
            if a.shape[0] != a.shape[1] or not np.allclose(a, a.T):
                raise ModelError(f"{name} must be a symmetric square matrix")


def sampling_factor(cov, name="covariance"):
    """Return ``S`` with ``S S^T = cov`` for a PSD ``cov`` (singular allowed)."""
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w.min() < -1e-10 * scale:
        raise ModelError(f"{name} is not positive semi-definite (min eig {w.min():.3g})")
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated or recorded realization.

    ``x`` is ``(tau+1, n_x)``; ``z`` and ``u`` are tuples of 1-D arrays of
    per-step length ``nz[k]`` and ``nu[k]``. ``w`` (``(tau, n_w)``) and ``v``
    (``(tau+1, n_v)``) are present for simulated data.
    """

    z: tuple
    u: tuple
    x: np.ndarray = None
    w: np.ndarray = None
    v: np.ndarray = None
    _flat: dict = field(default_factory=dict, repr=False)

    @property
    def z_flat(self):
        if "z" not in self._flat:
            self._flat["z"] = np.concatenate([np.ravel(a) for a in self.z])
        return self._flat["z"]

    @property
    def u_flat(self):
        if "u" not in self._flat:
            parts = [np.ravel(a) for a in self.u]
            self._flat["u"] = np.concatenate(parts) if parts else np.zeros(0)
        return self._flat["u"]


def _generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate(model, noise, x0_mean, x0_var, controls, seed=None):
    """Draw one trajectory of the model.

    Parameters
    ----------
    model : LtvModel
    noise : NoiseSpec
    x0_mean, x0_var : array_like
        Mean and covariance of the Gaussian initial state; scalars are
        broadcast to ``n_x``.
    controls : sequence of array_like
        ``tau`` control vectors; entry ``k`` has length ``nu[k]``.
    seed : int, SeedSequence or Generator
    """
    model.check()
    tau, n_x = model.tau, model.n_x
    if len(controls) != tau:
        raise ModelError(f"expected {tau} control vectors, got {len(controls)}")
    u = tuple(np.asarray(c, dtype=float).reshape(-1) for c in controls)
    for k, (uk, nk) in enumerate(zip(u, model.nu)):
        if uk.size != nk:
            raise ModelError(f"control at k={k} has length {uk.size}, expected {nk}")

    if noise.Q.shape != (model.n_w, model.n_w) or noise.R.shape != (model.n_v, model.n_v):
        raise ModelError("noise covariance shapes do not match n_w / n_v")
    sq = sampling_factor(noise.Q, "Q")
    sr = sampling_factor(noise.R, "R")
    m0 = np.broadcast_to(np.asarray(x0_mean, dtype=float).reshape(-1), (n_x,))
    p0 = np.asarray(x0_var, dtype=float)
    p0 = p0 * np.eye(n_x) if p0.ndim == 0 else _as_matrix(p0)
    s0 = sampling_factor(p0, "initial state covariance")

    rng = _generator(seed)
    x0 = m0 + s0 @ rng.standard_normal(n_x)
    w = rng.standard_normal((tau, model.n_w)) @ sq.T
    v = rng.standard_normal((tau + 1, model.n_v)) @ sr.T

    x = np.empty((tau + 1, n_x))
    x[0] = x0
    for k in range(tau):
        x[k + 1] = model.F[k] @ x[k] + model.G[k] @ u[k] + model.E[k] @ w[k]
    z = tuple(model.H[k] @ x[k] + model.D[k] @ v[k] for k in range(tau + 1))
    return Trajectory(z=z, u=u, x=x, w=w, v=v)
