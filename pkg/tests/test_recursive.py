import numpy as np
import pytest

from mdmid.estimators import build_regression, estimate_semiweighted, estimate_unweighted
from mdmid.experiments import RLS_INIT_2, builtin_model_2
from mdmid.model import simulate
from mdmid.recursive import rls_init, rls_run, rls_step


@pytest.fixture(scope="module")
def system():
    model, noise, controls = builtin_model_2(300)
    traj = simulate(model, noise, 1.0, 1.0, controls, seed=21)
    return noise, build_regression(model, traj, 2, 1)


def test_init_accepts_published_values():
    state = rls_init(RLS_INIT_2["theta"], RLS_INIT_2["sigma"], "sw-re")
    np.testing.assert_array_equal(state.theta, [0.5, 0.5, 0.0, 0.5])
    np.testing.assert_array_equal(state.sigma, 10 * np.eye(4))
    assert state.step == 0


def test_init_rejects_bad_sigma():
    with pytest.raises(ValueError):
        rls_init([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        rls_init([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        rls_init([0.0], 1.0, "we-re")


def test_scalar_toy_step():
    state = rls_step(rls_init([0.0], 10.0, "uw-re"), [2.2], [[1.0]])
    np.testing.assert_allclose(state.theta, [2.0])
    np.testing.assert_allclose(state.sigma, [[10 / 11]])
    assert state.step == 1


def test_zero_design_leaves_state():
    state = rls_init([1.0, 2.0], [[3.0, 1.0], [1.0, 2.0]], "sw-re")
    new = rls_step(state, [5.0, -1.0], np.zeros((2, 2)), L=np.eye(2))
    np.testing.assert_array_equal(new.theta, state.theta)
    np.testing.assert_array_equal(new.sigma, state.sigma)


def test_zero_prior_never_moves(system):
    _, sys_ = system
    res = rls_run(sys_, rls_init([0.5, 0.5, 0.0, 0.5], 0.0, "uw-re"))
    np.testing.assert_array_equal(res.report.theta, [0.5, 0.5, 0.0, 0.5])


def test_diffuse_prior_first_step_is_block_least_squares():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 3))
    y = rng.standard_normal(6)
    state = rls_step(rls_init(np.zeros(3), 1e9, "uw-re"), y, A)
    ref = np.linalg.lstsq(A, y, rcond=None)[0]
    assert np.linalg.norm(state.theta - ref) < 1e-6 * np.linalg.norm(ref)


def test_step_dimension_mismatch():
    with pytest.raises(ValueError):
        rls_step(rls_init([0.0, 0.0], 1.0, "uw-re"), [1.0], [[1.0]])


@pytest.mark.parametrize("policy", ["uw-re", "sw-re"])
def test_exact_observations_converge(system, policy):
    noise, sys_ = system
    truth = sys_.layout.pack(noise.Q, noise.R)
    exact = sys_.with_observations(sys_.A @ truth)
    theta0 = np.array(RLS_INIT_2["theta"])
    res = rls_run(exact, rls_init(theta0, RLS_INIT_2["sigma"], policy))
    # with a finite prior the recursion lands on the prior-regularized solution
    G = np.eye(4) / RLS_INIT_2["sigma"]
    b = theta0 / RLS_INIT_2["sigma"]
    for i in range(exact.n_windows):
        y, A, L = exact.block(i)
        W = np.linalg.pinv(L @ L.T) if policy == "sw-re" else np.eye(y.size)
        G += A.T @ W @ A
        b += A.T @ W @ y
    np.testing.assert_allclose(res.report.theta, np.linalg.solve(G, b), rtol=1e-8)
    err = np.abs(res.trace - truth).max(axis=1)
    assert err[-1] < 0.02 * np.abs(theta0 - truth).max()


@pytest.mark.parametrize("policy,batch", [("uw-re", estimate_unweighted), ("sw-re", estimate_semiweighted)])
def test_diffuse_prior_matches_batch(system, policy, batch):
    _, sys_ = system
    res = rls_run(sys_, rls_init(np.zeros(4), 1e9, policy))
    ref = batch(sys_).theta
    assert np.max(np.abs(res.report.theta - ref)) / np.max(np.abs(ref)) < 1e-6


@pytest.mark.parametrize("policy", ["uw-re", "sw-re"])
def test_information_is_monotone(system, policy):
    _, sys_ = system
    state = rls_init(RLS_INIT_2["theta"], RLS_INIT_2["sigma"], policy)
    for i in range(0, sys_.n_windows, 7):
        y, A, L = sys_.block(i)
        new = rls_step(state, y, A, L)
        drop = np.linalg.eigvalsh(state.sigma - new.sigma)
        assert drop.min() > -1e-10 * max(1.0, np.abs(state.sigma).max())
        np.testing.assert_array_equal(new.sigma, new.sigma.T)
        state = new


@pytest.mark.parametrize("policy", ["uw-re", "sw-re"])
def test_run_matches_repeated_steps(system, policy):
    _, sys_ = system
    init = rls_init(RLS_INIT_2["theta"], RLS_INIT_2["sigma"], policy)
    state = init
    for i in range(sys_.n_windows):
        state = rls_step(state, *sys_.block(i))
    for backend in ("numpy", "numba"):
        res = rls_run(sys_, init, backend)
        np.testing.assert_allclose(res.report.theta, state.theta, rtol=1e-9)
        np.testing.assert_allclose(res.state.sigma, state.sigma, rtol=1e-8, atol=1e-14)
        assert res.state.step == sys_.n_windows
        assert res.trace.shape == (sys_.n_windows, 4)
        np.testing.assert_array_equal(res.ks, sys_.ks)
