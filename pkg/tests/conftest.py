import numpy as np
import pytest

from qualdyn.models import ModelSystem

LORENZ_TEXT = """\
states: x, y, z
params: sigma, rho, beta
dx/dt = sigma*(y - x)
dy/dt = x*(rho - z) - y
dz/dt = x*y - beta*z
"""

HES1_TEXT = """\
# transcription saturates at 1; k_deg enters as an explicit parameter here
states: M, P1, P2
params: P0, nu, k1, h, k_deg
dM/dt = -k_deg*M + 1/(1 + (P2/P0)^h)
dP1/dt = -k_deg*P1 + nu*M - k1*P1
dP2/dt = -k_deg*P2 + k1*P1
"""

HYPERCHAOS_TEXT = """\
states: x1, x2, x3, x4
params: a, b, c, d, e, f
dx1/dt = a*(x2 - x1) + x2*x3
dx2/dt = b*(x1 + x2) - x1*x3
dx3/dt = -c*x3 - e*x4 + x1*x2
dx4/dt = -d*x4 + f*x3 + x1*x2
"""


@pytest.fixture
def linear_decay_model():
    """One-dimensional contraction, exact exponent -1."""
    return ModelSystem(
        name="decay",
        dim=1,
        state_names=("x",),
        param_names=(),
        rhs=lambda y, p, t: -y,
        jacobian=lambda y, p: np.array([[-1.0]]),
        default_initial_state=(1.0,),
        default_params=(),
    )


@pytest.fixture
def harmonic_model():
    """Conservative rotation: spectrum (0, 0)."""
    return ModelSystem(
        name="harmonic",
        dim=2,
        state_names=("x", "v"),
        param_names=(),
        rhs=lambda y, p, t: np.array([y[1], -y[0]]),
        jacobian=lambda y, p: np.array([[0.0, 1.0], [-1.0, 0.0]]),
        default_initial_state=(1.0, 0.0),
        default_params=(),
    )


@pytest.fixture
def blowup_model():
    """dy/dt = theta * y^2: finite-time blow-up for theta > 0."""
    return ModelSystem(
        name="blowup",
        dim=1,
        state_names=("x",),
        param_names=("theta",),
        rhs=lambda y, p, t: p[0] * y * y,
        jacobian=lambda y, p: np.array([[2.0 * p[0] * y[0]]]),
        default_initial_state=(1.0,),
        default_params=(1.0,),
    )
