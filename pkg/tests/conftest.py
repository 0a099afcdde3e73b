import numpy as np
import pytest

from phdae.model import LTIModel, PHDAEModel, constant, lti_to_model


def scalar_lti(R_value: float) -> PHDAEModel:
    """One-state model x' = -(R) x with H = x^2 / 2 and no ports."""
    one = np.ones((1, 1))
    return lti_to_model(LTIModel(
        E=one, J=np.zeros((1, 1)), R=R_value * one,
        B=np.zeros((1, 0)), P=np.zeros((1, 0)),
        S=np.zeros((0, 0)), N=np.zeros((0, 0)),
        Z=one, w=np.zeros(1), Q=one, v=np.zeros(1), c=0.0,
    ), time_interval=(0.0, 10.0))


@pytest.fixture
def decay_model():
    return scalar_lti(1.0)


@pytest.fixture
def lossless_model():
    return scalar_lti(0.0)


def random_skew_model(rng, n: int, m: int) -> PHDAEModel:
    """Valid constant model with random skew structure blocks."""
    E = rng.normal(size=(n, n))
    E = 0.5 * (E + E.T)
    A = rng.normal(size=(n, n))
    J = 0.5 * (A - A.T)
    C = rng.normal(size=(n, n))
    R = C.T @ C
    B = rng.normal(size=(n, m))
    D = rng.normal(size=(m, m))
    N = 0.5 * (D - D.T)
    G = rng.normal(size=(m, m))
    S = G.T @ G
    return lti_to_model(LTIModel(
        E=E, J=J, R=R, B=B, P=np.zeros((n, m)), S=S, N=N,
        Z=np.eye(n), w=np.zeros(n), Q=E, v=np.zeros(n), c=0.0))


@pytest.fixture
def quartic_model():
    """Nonlinear scalar model x' = -x^3 with the quartic energy x^4 / 4."""
    return PHDAEModel(
        n=1, ell=1, m=0,
        E=constant(np.eye(1)), J=constant(np.zeros((1, 1))),
        R=constant(np.eye(1)),
        B=constant(np.zeros((1, 0))), P=constant(np.zeros((1, 0))),
        S=constant(np.zeros((0, 0))), N=constant(np.zeros((0, 0))),
        z=lambda t, x: x ** 3,
        r=constant(np.zeros(1)),
        H=lambda t, x: float(x[0] ** 4 / 4.0),
        gradH_x=lambda t, x: x ** 3,
        gradH_t=lambda t, x: 0.0,
        time_interval=(0.0, 10.0),
    )
