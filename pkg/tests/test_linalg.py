import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qps.errors import DimensionMismatch, NonHermitianInput, NotPsd
from qps.linalg import (
    dagger,
    eig_hermitian,
    expm_hermitian,
    fix_phases,
    fro,
    is_projector,
    is_unitary,
    span_projector,
    sqrt_psd,
)
from qps.sampling import random_density, random_hermitian, random_unitary, rng_for


def test_eig_identity():
    spec = eig_hermitian(np.eye(2))
    assert np.allclose(spec.eigenvalues, [1, 1])
    assert np.allclose(dagger(spec.eigenvectors) @ spec.eigenvectors, np.eye(2), atol=1e-12)


def test_eig_pauli_x():
    spec = eig_hermitian(np.array([[0, 1], [1, 0]], dtype=complex))
    assert np.allclose(spec.eigenvalues, [1, -1], atol=1e-14)


def test_eig_random_reconstruction(rng):
    H = random_hermitian(8, rng, scale=3.0)
    spec = eig_hermitian(H)
    assert fro(spec.reconstruct() - H) < 1e-10 * max(1.0, fro(H))
    V = spec.eigenvectors
    assert fro(dagger(V) @ V - np.eye(8)) < 1e-12


def test_eig_sorted_descending_and_phase_fixed(rng):
    spec = eig_hermitian(random_hermitian(6, rng))
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    V = spec.eigenvectors
    piv = V[np.argmax(np.abs(V), axis=0), np.arange(6)]
    assert np.allclose(piv.imag, 0, atol=1e-14) and np.all(piv.real > 0)


def test_eig_deterministic(rng):
    H = random_hermitian(5, rng)
    a, b = eig_hermitian(H), eig_hermitian(H.copy())
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_eig_rejects_non_hermitian():
    with pytest.raises(NonHermitianInput):
        eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(DimensionMismatch):
        eig_hermitian(np.zeros((2, 3)))


def test_fix_phases_is_gauge_only(rng):
    U = random_unitary(4, rng)
    F = fix_phases(U * np.exp(1j * rng.uniform(0, 6, 4)))
    assert np.allclose(np.abs(np.sum(F.conj() * U, axis=0)), 1.0)


def test_sqrt_diagonal():
    assert np.allclose(sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_sqrt_projector_combination(rng):
    V = random_unitary(5, rng)
    Pr = V[:, :2] @ dagger(V[:, :2])
    Pk = np.eye(5) - Pr
    assert fro(sqrt_psd(Pk + 0.25 * Pr) - (Pk + 0.5 * Pr)) < 1e-12


def test_sqrt_random_psd(rng):
    E = random_density(6, rng) * 3
    R = sqrt_psd(E)
    assert fro(R @ R - E) < 1e-10


def test_sqrt_projector_idempotent(rng):
    V = random_unitary(4, rng)[:, :3]
    P = V @ dagger(V)
    assert fro(sqrt_psd(P) - P) < 1e-12


def test_sqrt_rejects_negative():
    with pytest.raises(NotPsd):
        sqrt_psd(np.diag([1.0, -1e-3]))
    # roundoff-sized negatives are clamped
    assert np.allclose(sqrt_psd(np.diag([1.0, -1e-12])), np.diag([1.0, 0.0]))


def test_span_single_basis_vector():
    assert np.allclose(span_projector([np.array([1.0, 0, 0])]), np.diag([1.0, 0, 0]))


def test_span_tolerance_collapse():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    P = span_projector([e1, e1 + 1e-16 * e2], tol=1e-10)
    assert np.allclose(P, np.diag([1.0, 0, 0]), atol=1e-14)


def test_span_displaced_gaussians():
    from qps.apps import SuperresConfig, source_kets

    plus, minus = source_kets(SuperresConfig(), 0.5)
    P = span_projector([plus, minus])
    assert abs(np.trace(P).real - 2) < 1e-10
    assert np.linalg.norm(P @ plus - plus) < 1e-12
    assert np.linalg.norm(P @ minus - minus) < 1e-12


def test_span_zero_vectors_and_mismatch():
    assert np.allclose(span_projector([np.zeros(3)]), 0)
    with pytest.raises(DimensionMismatch):
        span_projector([np.zeros(2), np.zeros(3)])


def test_projector_and_unitary_predicates(rng):
    U = random_unitary(3, rng)
    assert is_unitary(U) and not is_unitary(2 * U)
    assert is_projector(np.diag([1.0, 0.0])) and not is_projector(np.diag([0.5, 0.0]))


def test_expm_matches_scipy(rng):
    from scipy.linalg import expm

    G = random_hermitian(4, rng)
    assert np.allclose(expm_hermitian(G, 0.7), expm(-0.7j * G), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 9))
def test_eig_trace_and_orthonormality(seed, d):
    H = random_hermitian(d, rng_for(seed), scale=5.0)
    spec = eig_hermitian(H)
    tr = np.trace(H).real
    assert abs(spec.eigenvalues.sum() - tr) <= 1e-10 * max(1.0, abs(tr), fro(H))
    V = spec.eigenvectors
    assert fro(dagger(V) @ V - np.eye(d)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 7), k=st.integers(1, 4))
def test_span_invariant_under_reorder_and_rescale(seed, d, k):
    rng = rng_for(seed)
    k = min(k, d)
    vecs = [rng.normal(size=d) + 1j * rng.normal(size=d) for _ in range(k)]
    P = span_projector(vecs)
    scaled = [v * s for v, s in zip(vecs[::-1], rng.uniform(0.1, 10, k) * np.exp(1j * rng.uniform(0, 6, k)))]
    assert fro(P - span_projector(scaled)) < 1e-10
    assert is_projector(P, 1e-10)
    assert abs(np.trace(P).real - k) < 1e-10
