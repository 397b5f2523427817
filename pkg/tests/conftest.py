import math

import numpy as np
import pytest

from cavity_bloch import validate

KAPPA = 345.0
FORCE = 0.25 / math.pi  # Bloch frequency = recoil/4, period 8*pi


def reference_params(beta_mult=1, eta_over_kappa=30.7, n_max=16, force=FORCE, **extra):
    """The kappa = 345 experimental family (u0 = 7e-3 per coupling unit)."""
    raw = {
        "u0": 7e-3 * beta_mult,
        "n_atoms": 5e4,
        "eta": eta_over_kappa * KAPPA,
        "delta_c": -0.75 * KAPPA,
        "kappa": KAPPA,
        "force": force,
        "q0": 0.0,
        "n_max": n_max,
    }
    raw.update(extra)
    return validate(raw)


@pytest.fixture(scope="session")
def params_beta1():
    return reference_params(1, 30.7)


@pytest.fixture(scope="session")
def params_beta3():
    return reference_params(3, 24.2)


@pytest.fixture(scope="session")
def params_beta5():
    return reference_params(5, 24.3)


@pytest.fixture(scope="session")
def steady_beta1(params_beta1):
    from cavity_bloch.meanfield import steady_state

    return steady_state(params_beta1)


@pytest.fixture(scope="session")
def traj_beta1_quarter(params_beta1):
    """Quarter Bloch period of the reference run (shared by fast tests)."""
    from cavity_bloch.meanfield import evolve

    return evolve(params_beta1, t_end=0.25 * params_beta1.bloch_period)


def random_normalized_coeffs(rng, n_max, spread=3.0):
    n = np.arange(-n_max, n_max + 1)
    c = rng.normal(size=2 * n_max + 1) + 1j * rng.normal(size=2 * n_max + 1)
    c *= np.exp(-((n / spread) ** 2))
    return c / np.sqrt(np.sum(np.abs(c) ** 2))
