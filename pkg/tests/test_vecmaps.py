import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from mdmid.vecmaps import (
    CovLayout,
    kron_power,
    noise_cov,
    replication_matrix,
    unification_matrix,
    unvec,
    vec,
)


def test_vec_column_major():
    np.testing.assert_array_equal(vec(np.array([[1, 3], [2, 4]])), [1, 2, 3, 4])


def test_unvec_round_trip(rng):
    B = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(unvec(vec(B), 3, 2), B)
    with pytest.raises(ValueError):
        unvec(np.zeros(5), 3, 2)


def test_vec_outer_product(rng):
    a, b = rng.standard_normal(3), rng.standard_normal(4)
    np.testing.assert_allclose(vec(np.outer(a, b)), np.kron(b, a))


def test_kron_power(rng):
    A = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(kron_power(A, 1), A)
    np.testing.assert_allclose(kron_power(np.array([[2.0]]), 2), [[4.0]])
    B = rng.standard_normal((3, 2))
    np.testing.assert_allclose(kron_power(A @ B, 2), kron_power(A, 2) @ kron_power(B, 2))


def test_mixed_product(rng):
    A, B = rng.standard_normal((2, 3)), rng.standard_normal((4, 2))
    C, D = rng.standard_normal((3, 5)), rng.standard_normal((2, 3))
    np.testing.assert_allclose(np.kron(A, B) @ np.kron(C, D), np.kron(A @ C, B @ D))


def test_replication_scalar():
    psi = replication_matrix(1, 1, 2).toarray()
    expected = np.zeros((9, 2))
    expected[0, 0] = expected[4, 1] = expected[8, 1] = 1
    np.testing.assert_array_equal(psi, expected)


def test_replication_two_sensor_shape(rng):
    psi = replication_matrix(1, 2, 2)
    assert psi.shape == (25, 4)
    layout = CovLayout(1, 2)
    A = rng.standard_normal((2, 2))
    Q, R = np.array([[3.0]]), A + A.T
    rebuilt = unvec(psi @ layout.pack(Q, R), 5, 5)
    np.testing.assert_array_equal(rebuilt, sla.block_diag(Q, R, R))


def test_replication_zero_rows_are_cross_blocks():
    n_w, n_v, P = 2, 2, 3
    psi = replication_matrix(n_w, n_v, P).toarray()
    assert np.all(psi.sum(axis=1) <= 1)
    # owner block of every coordinate of the stacked noise window
    owner = np.concatenate([np.repeat(np.arange(P - 1), n_w), P - 1 + np.repeat(np.arange(P), n_v)])
    n = owner.size
    rows = np.arange(n * n)
    same = owner[rows % n] == owner[rows // n]
    np.testing.assert_array_equal(psi.sum(axis=1) > 0, same)


@pytest.mark.parametrize("n_w,n_v,P", [(1, 1, 1), (1, 2, 3), (2, 2, 2), (3, 1, 4)])
def test_replication_reconstruction(n_w, n_v, P):
    rng = np.random.default_rng(n_w * 100 + n_v * 10 + P)
    psi = replication_matrix(n_w, n_v, P)
    layout = CovLayout(n_w, n_v)
    n = (P - 1) * n_w + P * n_v
    for _ in range(100):
        a, b = rng.standard_normal((n_w, n_w)), rng.standard_normal((n_v, n_v))
        Q, R = a + a.T, b + b.T
        expected = sla.block_diag(*([Q] * (P - 1) + [R] * P))
        np.testing.assert_array_equal(unvec(psi @ layout.pack(Q, R), n, n), expected)
        np.testing.assert_array_equal(noise_cov(Q, R, P), expected)


def test_unification_matrix():
    np.testing.assert_array_equal(unification_matrix(1).toarray(), [[1]])
    xi = unification_matrix(2).toarray()
    assert xi.shape == (3, 4)
    np.testing.assert_array_equal(np.nonzero(xi)[1] + 1, [1, 2, 4])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_unification_reconstruction(m, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, m))
    S = a + a.T
    xi = unification_matrix(m)
    assert np.all(xi.sum(axis=1) == 1)
    picked = xi @ vec(S)
    # the transpose of the selector with off-diagonal mirroring rebuilds S
    low = unvec(xi.T @ picked, m, m)
    np.testing.assert_array_equal(np.tril(low) + np.tril(low, -1).T, S)


def test_layout_labels_and_round_trip(rng):
    layout = CovLayout(1, 2)
    assert layout.labels() == ["Q", "R(1,1)", "R(1,2)", "R(2,2)"]
    assert layout.index_of("R(1,2)") == 2
    Q = random_spd(rng, 1)
    R = random_spd(rng, 2)
    theta = layout.pack(Q, R)
    assert theta[2] == R[1, 0]
    Q2, R2 = layout.unpack(theta)
    np.testing.assert_array_equal(Q2, Q)
    np.testing.assert_array_equal(R2, R)
    big = CovLayout(3, 2)
    assert big.size == 6 + 3
    for i, label in enumerate(big.labels()):
        assert big.index_of(label) == i
