import numpy as np
import pytest

from conftest import pure_rotation_family
from qps.apps import (
    SIGMA_X,
    SuperresConfig,
    source_kets,
    superres_convex_elements,
    superres_decomposition,
)
from qps.linalg import dagger
from qps.quasipure import (
    APPROX_TOL,
    criteria_report,
    is_approximately_quasipure,
    is_quasipure,
    residual_spectral,
)
from qps.sampling import random_ancilla_instance, random_unitary, rng_for
from qps.state import ConvexDecomposition, ParametricState, derivative_at


def test_pure_family_residual(rng):
    S = pure_rotation_family(SIGMA_X, np.array([0.6, 0.8], complex))
    assert residual_spectral(S, 0.4) < 1e-10


@pytest.mark.parametrize("x", np.linspace(-1, 1, 20))
def test_two_qubit_quasipure_everywhere(two_qubit, x):
    assert residual_spectral(two_qubit, x) < 1e-10
    assert is_quasipure(two_qubit, x)


def test_superres_residual_gaussian_moment_oracle(superres):
    x = 0.5
    M = superres_convex_elements(x, 0.3, 1.0)
    c = np.exp(-x * x / 8)
    Gi = np.linalg.inv(np.array([[1, c], [c, 1]]))
    # ||Pi_r d rho Pi_r||_F^2 = Tr(M G^-1 M G^-1) for the non-orthogonal pair
    oracle = np.sqrt(np.trace(M @ Gi @ M @ Gi).real)
    assert abs(residual_spectral(superres, x) - oracle) < 1e-6


def test_superres_convex_elements_against_fd(superres):
    x = 0.5
    cfg = SuperresConfig()
    V = np.stack(source_kets(cfg, x), axis=1)
    fd = derivative_at(superres, x, method="fd", richardson=True)
    assert np.allclose(dagger(V) @ fd @ V, superres_convex_elements(x, 0.3, 1.0), atol=1e-8)


def test_superres_convex_criterion(superres):
    x = 0.5
    dec = superres_decomposition(SuperresConfig()).evaluate(x)
    rep = criteria_report(superres, x, dec)
    M = superres_convex_elements(x, 0.3, 1.0)
    assert np.allclose(rep.convex_matrix, M, atol=1e-6)
    assert abs(rep.convex_residual - np.max(np.abs(M))) < 1e-6
    assert not rep.verdict and rep.verdict_convex is False
    assert rep.consistent


def test_superres_approximately_quasipure(superres):
    assert is_approximately_quasipure(superres, 1e-4, APPROX_TOL)
    assert not is_quasipure(superres, 1e-4)
    assert not is_approximately_quasipure(superres, 0.5)


def test_superres_residual_vanishes_linearly(superres):
    xs = np.geomspace(1e-4, 1e-2, 12)
    r = np.array([residual_spectral(superres, x, rank_tol=APPROX_TOL) for x in xs])
    slope, intercept = np.polyfit(xs, r, 1)
    assert slope > 0 and abs(intercept) < 1e-8


def test_ancilla_instance_report():
    S, fam, _ = random_ancilla_instance(rng_for(1), d_s=4, rank=3)
    rep = criteria_report(S, 0.35, fam.evaluate(0.35))
    assert rep.rank == 3
    for v in (rep.residual_spectral, rep.eigenvalue_drift, rep.gencoder_residual, rep.convex_residual):
        assert v < 1e-9
    assert rep.verdict and rep.consistent
    assert all(p.passed for p in rep.pairwise)


def test_degenerate_ancilla_instance():
    S, fam, _ = random_ancilla_instance(rng_for(2), d_s=4, rank=3, degenerate=True)
    rep = criteria_report(S, -0.2, fam.evaluate(-0.2))
    assert any(p.degenerate for p in rep.pairwise)
    assert rep.verdict and rep.consistent


@pytest.mark.parametrize("perturb", ["labels", "weights", "both"])
def test_perturbed_instances_fail_consistently(perturb):
    S, fam, _ = random_ancilla_instance(rng_for(3), d_s=4, rank=3, perturb=perturb)
    rep = criteria_report(S, 0.1, fam.evaluate(0.1))
    assert not rep.verdict and rep.consistent
    assert rep.residual_spectral >= 0 and rep.gencoder_residual >= 0


def test_residual_invariant_under_fixed_unitary():
    S, _, _ = random_ancilla_instance(rng_for(4), perturb="both")
    W = random_unitary(S.dim, rng_for(5))
    T = ParametricState(
        lambda x: W @ S.evaluator(x) @ dagger(W),
        S.dim,
        derivative=lambda x, i: W @ S.derivative(x, i) @ dagger(W),
    )
    assert abs(residual_spectral(S, 0.3) - residual_spectral(T, 0.3)) < 1e-10


def test_report_rejects_wrong_decomposition(two_qubit):
    from qps.errors import BadDecomposition

    with pytest.raises(BadDecomposition):
        criteria_report(two_qubit, 0.3, ConvexDecomposition([1.0], np.eye(4)[:, :1]))
