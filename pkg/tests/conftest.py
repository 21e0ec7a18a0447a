import numpy as np
import pytest

from qps.apps import SuperresConfig, superres_state, two_qubit_state
from qps.state import ParametricState


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture(scope="session")
def superres():
    return superres_state(SuperresConfig(q=0.3, sigma=1.0, n_max=30, x_max=1.0))


@pytest.fixture(scope="session")
def two_qubit():
    return two_qubit_state(0.3)


def linear_qubit_family() -> ParametricState:
    """diag(x, 1 - x) with its analytic derivative."""
    return ParametricState(
        lambda x: np.diag([x[0], 1 - x[0]]).astype(complex),
        2,
        derivative=lambda x, i: np.diag([1.0, -1.0]).astype(complex),
        domain=[(0.0, 1.0)],
        name="linear",
    )


def pure_rotation_family(G: np.ndarray, psi: np.ndarray) -> ParametricState:
    """exp(-iGx)|psi> without an analytic derivative."""
    w, V = np.linalg.eigh(G)

    def rho(x):
        ket = (V * np.exp(-1j * w * x[0])) @ V.conj().T @ psi
        return np.outer(ket, ket.conj())

    return ParametricState(rho, G.shape[0], name="pure-rotation")
