"""Compare the numba and numpy backends of the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--tau 1000] [--repeats 20]

Each kernel is run once per backend to warm up (numba compiles on first
call, results are cached on disk), then timed with ``timeit``; the table
shows the best-of-repeats time per call and the numpy/numba speedup.
Results are also checked for agreement between the two backends.
"""

import argparse
import timeit

import numpy as np

from mdmid import kernels
from mdmid._accel import HAVE_NUMBA
from mdmid.estimators import RegressionDesign, estimate_semiweighted
from mdmid.experiments import builtin_model_1, builtin_model_2
from mdmid.moments import lag_noise_cov
from mdmid.model import simulate


def cases(system, traj, noise):
    design = system.design
    data = np.concatenate([-traj.u_flat, traj.z_flat])
    lags = np.stack([lag_noise_cov(noise.Q, noise.R, design.P, j) for j in range(design.P)])
    p = system.A.shape[1]
    yield "observations", lambda b: kernels.observations(design.packed, data, b)[1]
    yield "sw_normal", lambda b: kernels.sw_normal(
        system.A, system.y, system.Lrows, system.row_off, system.height_groups, b
    )[0]
    yield "p2_band", lambda b: kernels.p2_band(design.packed, lags, b)[0]
    yield "rls uw-re", lambda b: kernels.rls_sweep(
        np.zeros(p), 10 * np.eye(p), system.A, system.y, system.row_off, None, b
    )[0]
    yield "rls sw-re", lambda b: kernels.rls_sweep(
        np.zeros(p), 10 * np.eye(p), system.A, system.y, system.row_off, system.Lrows, b
    )[0]
    yield "estimate sw-nr", lambda b: estimate_semiweighted(system, b).theta


def best_time(fn, repeats):
    number = 3
    return min(timeit.repeat(fn, number=number, repeat=repeats)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tau", type=int, default=1000)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'model':10s} {'kernel':16s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}  agree")
    for name, factory, L, N in (("builtin-1", builtin_model_1, 1, 1), ("builtin-2", builtin_model_2, 2, 1)):
        model, noise, controls = factory(args.tau)
        design = RegressionDesign.build(model, L, N)
        traj = simulate(model, noise, 1.0, 1.0, controls, seed=0)
        system = design.system(traj)
        for label, fn in cases(system, traj, noise):
            ref = fn("numpy")
            out = fn("numba")
            agree = np.allclose(out, ref, rtol=1e-9, atol=1e-12 * max(1.0, np.abs(ref).max()))
            t_np = best_time(lambda: fn("numpy"), args.repeats)
            t_nb = best_time(lambda: fn("numba"), args.repeats)
            print(f"{name:10s} {label:16s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.1f}  {agree}")


if __name__ == "__main__":
    main()
