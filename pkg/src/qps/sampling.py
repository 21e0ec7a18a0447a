"""Seeded random instances for property sweeps."""

from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from .apps import UnitaryFamily, ancilla_spectral_family
from .linalg import dagger, hermitian_part
from .postselect import Povm, PovmElement
from .state import ParametricState


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1), complex)


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * hermitian_part(A) / np.sqrt(2 * d)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    A = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = A @ dagger(A)
    return rho / np.trace(rho).real


def random_spectrum(r: int, rng: np.random.Generator, min_gap: float = 0.05) -> np.ndarray:
    """Descending probabilities with neighbouring gaps of at least ``min_gap``."""
    while True:
        q = np.sort(rng.dirichlet(np.ones(r)))[::-1]
        if r == 1 or np.min(-np.diff(q)) >= min_gap:
            return q


def random_mixed_family(
    d: int, rng: np.random.Generator, rank: int | None = None
) -> ParametricState:
    """``rho(x) = U(x) (sum_n p_n(x) |v_n><v_n|) U(x)^dag`` with x-dependent weights.

    ``U(x) = exp(-i G x)``; weights are a softmax of linear functions of x, so
    the rank is constant and the derivative is analytic.
    """
    rank = d if rank is None else rank
    V = random_unitary(d, rng)[:, :rank]
    G = random_hermitian(d, rng, scale=2.0)
    a = rng.normal(size=rank)
    b = rng.normal(size=rank)
    w_eval, W = np.linalg.eigh(G)

    def U(x):
        return (W * np.exp(-1j * w_eval * x)) @ dagger(W)

    def weights(x):
        z = np.exp(a + b * x - np.max(a + b * x))
        return z / z.sum()

    def base(x):
        return (V * weights(x)) @ dagger(V)

    def rho(xv):
        u = U(xv[0])
        return u @ base(xv[0]) @ dagger(u)

    def drho(xv, i):
        x = xv[0]
        u = U(x)
        w = weights(x)
        dw = w * (b - np.dot(w, b))
        r = u @ base(x) @ dagger(u)
        inner = u @ ((V * dw) @ dagger(V)) @ dagger(u)
        return inner - 1j * (G @ r - r @ G)

    return ParametricState(rho, d, 1, drho, name="random-mixed")


def random_povm(d: int, rng: np.random.Generator, n_outcomes: int | None = None) -> Povm:
    """Random POVM ``E_k = S^{-1/2} A_k S^{-1/2}`` from random positive ``A_k``.

    The first outcome is marked as kept, the others as discarded.
    """
    k = int(rng.integers(2, 5)) if n_outcomes is None else n_outcomes
    As = []
    for n in range(k):
        # the last element is full rank so the sum is invertible
        r = d if n == k - 1 else int(rng.integers(1, d + 1))
        B = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
        As.append(B @ dagger(B))
    S = sum(As)
    w, V = np.linalg.eigh(S)
    Sih = (V / np.sqrt(w)) @ dagger(V)
    Es = [hermitian_part(Sih @ A @ Sih) for A in As]
    # absorb the residual so the elements sum to the identity to machine precision
    Es[-1] = Es[-1] + (np.eye(d) - sum(Es))
    return Povm([PovmElement(f"e{n}", E, n == 0) for n, E in enumerate(Es)], "random")


def random_unitary_family(
    d_s: int, rng: np.random.Generator, rank: int, spectrum: np.ndarray | None = None
) -> UnitaryFamily:
    q = random_spectrum(rank, rng) if spectrum is None else np.asarray(spectrum, float)
    V = random_unitary(d_s, rng)[:, :rank]
    rho_i = (V * q) @ dagger(V)
    return UnitaryFamily((random_hermitian(d_s, rng, scale=2.0),), rho_i)


def random_commuting_family(
    d_s: int, rng: np.random.Generator, rank: int, num_params: int = 2
) -> UnitaryFamily:
    """Unitary family whose generators share one random eigenbasis."""
    q = random_spectrum(rank, rng)
    V = random_unitary(d_s, rng)[:, :rank]
    W = random_unitary(d_s, rng)
    gens = tuple((W * rng.normal(size=d_s)) @ dagger(W) for _ in range(num_params))
    return UnitaryFamily(gens, (V * q) @ dagger(V))


def random_ancilla_instance(
    rng: np.random.Generator,
    d_s: int = 4,
    rank: int = 3,
    d_a: int | None = None,
    degenerate: bool = False,
    perturb: str | None = None,
):
    """Ancilla-protocol family, optionally perturbed away from quasi-purity.

    ``perturb`` is ``None``, ``"labels"`` (non-orthogonal ancilla kets),
    ``"weights"`` (x-dependent weights) or ``"both"``. Returns
    ``(state, convex_family, unitary_family)``.
    """
    d_a = rank if d_a is None else d_a
    if degenerate and rank >= 2:
        q = random_spectrum(rank - 1, rng)
        q = np.sort(np.concatenate([q[:1] / 2, q[:1] / 2, q[1:]]))[::-1]
        q = q / q.sum()
    else:
        q = random_spectrum(rank, rng)
    F = random_unitary_family(d_s, rng, rank, q)
    kets = None
    slopes = None
    if perturb in ("labels", "both"):
        kets = np.eye(d_a, dtype=complex)[:, :rank]
        eta = rng.uniform(0.3, 0.8)
        kets = kets + eta * np.roll(kets, 1, axis=0)
    if perturb in ("weights", "both"):
        slopes = rng.uniform(0.3, 1.0, size=rank) * rng.choice([-1, 1], size=rank)
    S, fam = ancilla_spectral_family(F, d_a, ancilla_kets=kets, weight_slopes=slopes)
    return S, fam, F
