import csv
import json

import numpy as np
import pytest

from mdmid.experiments import (
    ExperimentConfig,
    builtin_model_1,
    builtin_model_2,
    regime_2,
    run_experiment,
    summarize,
)
from mdmid.vecmaps import CovLayout


def test_builtin_model_1_formulas():
    tau = 1400
    model, noise, controls = builtin_model_1(tau)
    assert model.F[0][0, 0] == 0.8 and model.H[0][0, 0] == 1.0
    np.testing.assert_allclose(model.F[tau // 14], [[0.7]])
    assert set(model.nz) == {1} and set(model.nu) == {1}
    assert model.n_x == model.n_w == model.n_v == 1
    np.testing.assert_allclose(controls[5], [np.sin(5 / tau)])
    assert noise.Q[0, 0] == 2.0 and noise.R[0, 0] == 1.0


@pytest.mark.parametrize("tau", [30, 31, 32, 1000])
def test_builtin_model_2_regimes(tau):
    model, _, _ = builtin_model_2(tau)
    np.testing.assert_array_equal(model.D[0], [[1.0, 0.0]])
    assert model.nz[0] == 1
    np.testing.assert_array_equal(model.D[tau - 1], np.eye(2))
    assert model.nz[tau - 1] == 2
    first2 = int(np.ceil(tau / 3))
    assert regime_2(first2 - 1, tau) == 1 and regime_2(first2, tau) == 2
    first3 = int(np.ceil(2 * tau / 3))
    assert regime_2(first3 - 1, tau) == 2 and regime_2(first3, tau) == 3
    np.testing.assert_array_equal(model.D[first2], [[0.0, 1.0]])


def test_summarize_two_points():
    s = summarize([[1.0], [3.0]])
    np.testing.assert_allclose(s["mean"], [2.0])
    np.testing.assert_allclose(s["cov_diag"], [2.0])


def test_summarize_constant_and_single():
    s = summarize(np.full((5, 2), 4.0), est_cov=np.ones((5, 2)))
    np.testing.assert_array_equal(s["cov_diag"], [0.0, 0.0])
    np.testing.assert_array_equal(s["est_cov"], [1.0, 1.0])
    assert summarize([[1.0, 2.0]])["cov_diag"] is None
    with pytest.raises(ValueError):
        summarize([[1.0, 2.0]], require_cov=True)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(model="builtin-1", methods=())
    with pytest.raises(ValueError):
        ExperimentConfig(model="builtin-1", methods=("we-re",))
    with pytest.raises(ValueError):
        ExperimentConfig(model="builtin-1", tau=1, L=1, N=1)
    with pytest.raises(ValueError):
        ExperimentConfig(model="file")
    cfg = ExperimentConfig(model="builtin-2")
    assert (cfg.L, cfg.N) == (2, 1)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_artifacts(tmp_path):
    cfg = ExperimentConfig(
        model="builtin-2", tau=60, mc=3, seed=4, methods=("uw-nr", "sw-nr", "uw-re", "sw-re"),
        out=str(tmp_path),
    )
    table = run_experiment(cfg)
    rows = _read(tmp_path / "results.csv")
    assert list(rows[0]) == ["method", "parameter", "true", "s_mean", "s_cov", "est_cov", "time_rel"]
    assert len(rows) == 4 * 4
    layout = CovLayout(1, 2)
    for row in rows:
        i = layout.index_of(row["parameter"])
        assert float(row["true"]) == table.truth[i]
    assert {r["parameter"] for r in rows} == {"Q", "R(1,1)", "R(1,2)", "R(2,2)"}
    assert float(next(r for r in rows if r["parameter"] == "R(1,2)")["true"]) == -1.0
    uw = [r for r in rows if r["method"] == "uw-nr"]
    assert all(float(r["time_rel"]) == 1.0 for r in uw)
    assert all(r["est_cov"] == "nan" for r in rows if r["method"].endswith("-re"))

    est = _read(tmp_path / "estimates.csv")
    assert len(est) == 3 * 4
    trace = _read(tmp_path / "trace.csv")
    assert list(trace[0]) == ["k", "method", "parameter", "mean", "std"]
    assert len(trace) == 2 * len(table.ks) * 4
    assert int(trace[0]["k"]) == 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 4 and manifest["config"]["mc"] == 3


def test_determinism(tmp_path):
    def run(out):
        cfg = ExperimentConfig(model="builtin-1", tau=100, mc=4, seed=9, out=str(out), record_timing=False)
        run_experiment(cfg)
        return {n: (out / n).read_bytes() for n in ("results.csv", "estimates.csv", "trace.csv", "manifest.json")}

    a = run(tmp_path / "a")
    b = run(tmp_path / "b")
    assert a["results.csv"] == b["results.csv"]
    assert a["estimates.csv"] == b["estimates.csv"]
    assert a["trace.csv"] == b["trace.csv"]


def test_estimates_independent_of_timing_and_backend(tmp_path):
    base = dict(model="builtin-2", tau=60, mc=2, seed=3)
    a = run_experiment(ExperimentConfig(**base, backend="numba"))
    b = run_experiment(ExperimentConfig(**base, backend="numpy", timing_repeats=1))
    for m in a.methods:
        np.testing.assert_allclose(a.estimates[m], b.estimates[m], rtol=1e-9)


def test_noise_free_single_run_gives_zero_estimates(tmp_path):
    npz = tmp_path / "quiet.npz"
    model, _, _ = builtin_model_1(50)
    np.savez(
        npz, F=np.array(model.F), G=np.array(model.G), E=np.array(model.E),
        H=np.array(model.H), D=np.array(model.D), Q=np.zeros((1, 1)), R=np.zeros((1, 1)),
    )
    cfg = ExperimentConfig(model="file", model_file=str(npz), tau=50, mc=1, L=1, N=1,
                           methods=("uw-nr", "sw-nr", "we-nr"), x0_var=0.0)
    table = run_experiment(cfg)
    for m in cfg.methods:
        np.testing.assert_allclose(table.estimates[m], 0.0, atol=1e-12)
    rows = table.rows()
    assert all(np.isnan(r["s_cov"]) for r in rows)
