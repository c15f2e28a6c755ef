"""Built-in example models and the Monte-Carlo experiment driver."""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import estimators as est
from .errors import MDMError
from .model import LtvModel, NoiseSpec, simulate
from .recursive import rls_init, rls_run

log = logging.getLogger(__name__)

METHODS = ("uw-nr", "sw-nr", "we-nr", "uw-re", "sw-re")


def controls_sine(tau):
    return [np.array([np.sin(k / tau)]) for k in range(tau)]


def builtin_model_1(tau):
    """Scalar model with fast-oscillating measurement gain; ``Q = 2``, ``R = 1``."""
    if tau < 2:
        raise ValueError("tau must be >= 2")
    model = LtvModel.from_rules(
        tau,
        F=lambda k: 0.8 - 0.1 * np.sin(7 * np.pi * k / tau),
        G=1.0,
        E=1.0,
        H=lambda k: 1 + 0.99 * np.sin(100 * np.pi * k / tau),
        D=1.0,
    )
    return model, NoiseSpec(Q=2.0, R=1.0), controls_sine(tau)


def regime_2(k, tau):
    """Sensor regime (1, 2 or 3) of the second example; thresholds ``tau/3``, ``2 tau/3``."""
    if 3 * k < tau:
        return 1
    if 3 * k < 2 * tau:
        return 2
    return 3


def builtin_model_2(tau):
    """Scalar state measured by two sensors whose availability changes in thirds."""
    if tau < 3:
        raise ValueError("tau must be >= 3")
    H = {1: np.ones((1, 1)), 2: np.ones((1, 1)), 3: np.ones((2, 1))}
    D = {1: np.array([[1.0, 0.0]]), 2: np.array([[0.0, 1.0]]), 3: np.eye(2)}
    model = LtvModel.from_rules(
        tau,
        F=lambda k: 1 + 0.1 * np.sin(20 * np.pi * k / tau),
        G=1.0,
        E=-1.0,
        H=lambda k: H[regime_2(k, tau)],
        D=lambda k: D[regime_2(k, tau)],
    )
    noise = NoiseSpec(Q=3.0, R=np.array([[2.0, -1.0], [-1.0, 1.0]]))
    return model, noise, controls_sine(tau)


BUILTINS = {
    "builtin-1": {"factory": builtin_model_1, "L": 1, "N": 1,
                  "methods": ("uw-nr", "sw-nr", "we-nr")},
    "builtin-2": {"factory": builtin_model_2, "L": 2, "N": 1,
                  "methods": ("uw-nr", "uw-re", "sw-nr", "sw-re")},
}

RLS_INIT_2 = {"theta": [0.5, 0.5, 0.0, 0.5], "sigma": 10.0}


@dataclass
class ExperimentConfig:
    model: str = "builtin-1"
    tau: int = 1000
    mc: int = 200
    seed: int = 0
    L: int = None
    N: int = None
    methods: tuple = None
    we_seed: str = "uw-nr"
    rls_theta0: list = None
    rls_sigma0: float = 10.0
    out: str = None
    project_psd: bool = False
    x0_mean: float = 1.0
    x0_var: float = 1.0
    model_file: str = None
    backend: str = None
    timing_repeats: int = 3
    record_timing: bool = True

    def __post_init__(self):
        preset = BUILTINS.get(self.model)
        if preset is None and self.model != "file":
            raise ValueError(f"unknown model {self.model!r}")
        if preset is not None:
            self.L = preset["L"] if self.L is None else self.L
            self.N = preset["N"] if self.N is None else self.N
            if self.methods is None:
                self.methods = preset["methods"]
        if self.L is None or self.N is None:
            raise ValueError("L and N are required for file models")
        if self.methods is None:
            self.methods = ("uw-nr", "sw-nr")
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {bad}")
        if self.L < 1 or self.N < 0 or self.tau < self.N + self.L:
            raise ValueError("need L >= 1, N >= 0 and tau >= N + L")
        if self.mc < 1:
            raise ValueError("mc must be >= 1")

    @classmethod
    def from_file(cls, path):
        """Read a JSON config document (keys are the dataclass fields)."""
        with open(path) as fh:
            doc = json.load(fh)
        if "methods" in doc and isinstance(doc["methods"], str):
            doc["methods"] = tuple(m.strip() for m in doc["methods"].split(","))
        base = Path(path).parent
        if doc.get("model_file"):
            doc["model_file"] = str(base / doc["model_file"])
        return cls(**doc)


def load_model_file(path):
    """Load explicit per-step matrices from an ``.npz`` archive.

    Expected arrays: ``F`` ``(tau, n_x, n_x)``, ``E`` ``(tau, n_x, n_w)``,
    ``Q``, ``R``, and either stacked ``H``/``D`` (constant ``n_z``) or
    ``H_0 .. H_tau`` / ``D_0 .. D_tau`` per step; ``G`` stacked or ``G_k``
    per step; optional ``u`` ``(tau, n_u)`` (default zero controls).
    """
    data = np.load(path)

    def seq(name, count):
        if name in data:
            return list(data[name])
        return [data[f"{name}_{k}"] for k in range(count)]

    tau = data["F"].shape[0]
    model = LtvModel(
        F=list(data["F"]), G=seq("G", tau), E=list(data["E"]),
        H=seq("H", tau + 1), D=seq("D", tau + 1),
    )
    noise = NoiseSpec(Q=data["Q"], R=data["R"])
    if "u" in data:
        controls = list(np.asarray(data["u"]).reshape(tau, -1))
    else:
        controls = [np.zeros(n) for n in model.nu]
    return model, noise, controls


def make_model(config):
    if config.model == "file":
        if not config.model_file:
            raise ValueError("model 'file' needs model_file")
        return load_model_file(config.model_file)
    return BUILTINS[config.model]["factory"](config.tau)


def rls_initial_state(config, layout, policy):
    if config.rls_theta0 is not None:
        theta0 = config.rls_theta0
    elif config.model == "builtin-2":
        theta0 = RLS_INIT_2["theta"]
    else:
        # unit diagonal, zero off-diagonal
        theta0 = layout.pack(0.5 * np.eye(layout.n_w), 0.5 * np.eye(layout.n_v))
    return rls_init(theta0, config.rls_sigma0, policy)


class RunError(MDMError):
    """A Monte-Carlo run failed; carries the failing module, run and time index."""

    def __init__(self, module, run, k, cause):
        self.module = module
        self.run = run
        self.k = k
        super().__init__(f"[{module}] MC run {run}, k={k}: {cause}")


def _timed(call, repeats):
    """Run ``call`` ``repeats`` times; return its last result with the median elapsed time."""
    reports = [call() for _ in range(max(1, repeats))]
    rep = reports[-1]
    return est.replace(rep, elapsed=float(np.median([r.elapsed for r in reports])))


def run_once(design, model, noise, controls, config, rng):
    """Simulate one trajectory and apply every requested method.

    Returns ``{method: (theta, est_cov_diag, elapsed, trace or None)}``.
    """
    traj = simulate(model, noise, config.x0_mean, config.x0_var, controls, rng)
    system = design.system(traj, config.backend)
    reps = config.timing_repeats
    out = {}
    uw = None
    for m in config.methods:
        if m == "uw-nr":
            rep = uw = _timed(lambda: est.estimate_unweighted(system), reps)
        elif m == "sw-nr":
            rep = _timed(lambda: est.estimate_semiweighted(system, config.backend), reps)
        elif m == "we-nr":
            seed = uw if (config.we_seed == "uw-nr" and uw is not None) else None
            rep = _timed(
                lambda: est.estimate_weighted(
                    system, seed=seed, seed_method=config.we_seed, backend=config.backend
                ),
                reps,
            )
            if seed is not None:
                # the seed was computed separately; charge it to we-nr as well
                rep = est.replace(rep, elapsed=rep.elapsed + seed.elapsed)
        else:
            init = rls_initial_state(config, design.layout, m)
            results = [rls_run(system, init, config.backend) for _ in range(max(1, reps))]
            elapsed = float(np.median([r.report.elapsed for r in results]))
            out[m] = (results[-1].report.theta, None, elapsed, results[-1].trace)
            continue
        if config.project_psd:
            rep = est.project_psd(rep)
        out[m] = (rep.theta, rep.cov_diag, rep.elapsed, None)
    return out


@dataclass
class ResultTable:
    """Per method and parameter statistics across Monte-Carlo runs."""

    labels: list
    truth: np.ndarray
    methods: tuple
    estimates: dict
    est_cov: dict
    times: dict
    traces: dict = field(default_factory=dict)
    ks: np.ndarray = None
    record_timing: bool = True

    def summary(self, method):
        return summarize(self.estimates[method], self.est_cov.get(method))

    def relative_times(self):
        med = {m: float(np.median(t)) for m, t in self.times.items()}
        ref = med.get("uw-nr")
        if ref is None or ref <= 0:
            return med
        return {m: t / ref for m, t in med.items()}

    def rows(self):
        rel = self.relative_times()
        rows = []
        for m in self.methods:
            s = self.summary(m)
            for i, label in enumerate(self.labels):
                rows.append({
                    "method": m,
                    "parameter": label,
                    "true": float(self.truth[i]),
                    "s_mean": float(s["mean"][i]),
                    "s_cov": float(s["cov_diag"][i]) if s["cov_diag"] is not None else float("nan"),
                    "est_cov": float(s["est_cov"][i]) if s["est_cov"] is not None else float("nan"),
                    "time_rel": rel[m] if self.record_timing else float("nan"),
                })
        return rows


def summarize(estimates, est_cov=None, require_cov=False):
    """Sample mean, unbiased sample covariance diagonal and mean reported covariance.

    ``cov_diag`` is ``None`` for a single run, or a ``ValueError`` when
    ``require_cov`` is set.
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    out = {"mean": estimates.mean(axis=0), "cov_diag": None, "est_cov": None}
    if estimates.shape[0] >= 2:
        out["cov_diag"] = estimates.var(axis=0, ddof=1)
    elif require_cov:
        raise ValueError("sample covariance needs at least two runs")
    if est_cov is not None:
        out["est_cov"] = np.mean(np.atleast_2d(est_cov), axis=0)
    return out


def run_experiment(config, progress=None):
    """Run the Monte-Carlo experiment; write CSV artifacts when ``config.out`` is set."""
    model, noise, controls = make_model(config)
    if config.model != "file" and config.tau != model.tau:
        raise MDMError("model horizon mismatch")
    try:
        design = est.RegressionDesign.build(model, config.L, config.N)
    except MDMError as exc:
        raise RunError(getattr(exc, "module", "stack_ops"), -1, getattr(exc, "k", None), exc) from exc
    layout = design.layout
    truth = layout.pack(noise.Q, noise.R)
    children = np.random.SeedSequence(config.seed).spawn(config.mc)

    estimates = {m: [] for m in config.methods}
    est_cov = {m: [] for m in config.methods if m.endswith("-nr")}
    times = {m: [] for m in config.methods}
    traces = {m: [] for m in config.methods if m.endswith("-re")}
    for run, child in enumerate(children):
        try:
            res = run_once(design, model, noise, controls, config, np.random.default_rng(child))
        except MDMError as exc:
            raise RunError(getattr(exc, "module", "mdmid"), run, getattr(exc, "k", None), exc) from exc
        for m, (theta, cov_diag, elapsed, trace) in res.items():
            estimates[m].append(theta)
            times[m].append(elapsed)
            if cov_diag is not None:
                est_cov[m].append(cov_diag)
            if trace is not None:
                traces[m].append(trace)
        if progress is not None:
            progress(run)

    table = ResultTable(
        labels=layout.labels(),
        truth=truth,
        methods=config.methods,
        estimates={m: np.array(v) for m, v in estimates.items()},
        est_cov={m: np.array(v) for m, v in est_cov.items()},
        times=times,
        traces={m: np.array(v) for m, v in traces.items()},
        ks=design.ks,
        record_timing=config.record_timing,
    )
    if config.out:
        write_artifacts(table, config)
    return table


def _fmt(x):
    return repr(float(x))


def write_artifacts(table, config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["method", "parameter", "true", "s_mean", "s_cov", "est_cov", "time_rel"]
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in table.rows():
            w.writerow([row["method"], row["parameter"]] + [_fmt(row[c]) for c in cols[2:]])

    with open(out / "estimates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "method"] + table.labels)
        for m in table.methods:
            for run, theta in enumerate(table.estimates[m]):
                w.writerow([run, m] + [_fmt(x) for x in theta])

    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "method", "parameter", "mean", "std"])
        for m, tr in table.traces.items():
            mean = tr.mean(axis=0)
            std = tr.std(axis=0, ddof=1) if tr.shape[0] > 1 else np.zeros_like(mean)
            for i, k in enumerate(table.ks):
                for p, label in enumerate(table.labels):
                    w.writerow([int(k), m, label, _fmt(mean[i, p]), _fmt(std[i, p])])

    manifest = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "labels": table.labels,
        "truth": table.truth.tolist(),
        "seed": config.seed,
    }
    if config.record_timing:
        manifest["median_time_s"] = {m: float(np.median(t)) for m, t in table.times.items()}
        manifest["created"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
