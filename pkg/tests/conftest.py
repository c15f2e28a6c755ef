import numpy as np
import pytest

from mdmid.model import LtvModel, NoiseSpec


def scalar_model(tau=10, F=0.8, H=1.0, G=1.0, E=1.0, D=1.0):
    return LtvModel.from_rules(tau, F=F, G=G, E=E, H=H, D=D)


def random_model(rng, tau=12, n_x=2, n_w=2, n_v=2, nz_choices=(1, 2, 3), nu_choices=(0, 1, 2)):
    """Random well-conditioned LTV model with time-varying n_z and n_u."""
    nz = rng.choice(nz_choices, size=tau + 1)
    nu = rng.choice(nu_choices, size=tau)
    F = [0.9 * np.linalg.qr(rng.standard_normal((n_x, n_x)))[0] for _ in range(tau)]
    G = [rng.standard_normal((n_x, n)) for n in nu]
    E = [rng.standard_normal((n_x, n_w)) for _ in range(tau)]
    H = [rng.standard_normal((n, n_x)) for n in nz]
    D = [rng.standard_normal((n, n_v)) for n in nz]
    return LtvModel(F=F, G=G, E=E, H=H, D=D, n_x=n_x, n_w=n_w, n_v=n_v)


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scalar_noise():
    return NoiseSpec(Q=2.0, R=1.0)
