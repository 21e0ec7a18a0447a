"""Ready-made families: two-point-source imaging, two-qubit unitary encoding, ancilla protocol."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammainc

from .errors import DimensionTooSmall, InvalidState, NotQuasiPure, TruncationInsufficient
from .linalg import RANK_TOL, dagger, expm_hermitian, fro, hermitian_part
from .postselect import _check_lambda
from .state import ConvexDecomposition, ConvexFamily, ParametricState, SpectralData, spectral_of

TAIL_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


# ---------------------------------------------------------------------------
# two incoherent point sources


@dataclass(frozen=True)
class SuperresConfig:
    """Two incoherent Gaussian point sources with relative intensity ``q``.

    The state lives in the first ``n_max`` Hermite-Gaussian modes; separations
    up to ``x_max`` must leave less than 1e-12 of norm outside the truncation.
    """

    q: float = 0.3
    sigma: float = 1.0
    n_max: int = 30
    x_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise InvalidState(f"q must lie in (0, 1), got {self.q}")
        if self.sigma <= 0:
            raise InvalidState("sigma must be positive")
        if self.n_max < 2:
            raise DimensionTooSmall("n_max must be at least 2")
        tail = displacement_tail(self.x_max / (4 * self.sigma), self.n_max)
        if tail >= TAIL_TOL:
            raise TruncationInsufficient(
                f"n_max = {self.n_max} leaves tail mass {tail:.2e} at x = {self.x_max}"
            )


def displacement_tail(alpha: float, n_max: int) -> float:
    """Norm of a displaced ground state outside the first ``n_max`` modes."""
    # Poisson(alpha^2) tail P(N >= n_max)
    return float(gammainc(n_max, alpha * alpha)) if alpha != 0 else 0.0


def displaced_coefficients(alpha: float, n_max: int) -> np.ndarray:
    """``c_n = exp(-alpha^2/2) alpha^n / sqrt(n!)`` for n < n_max."""
    c = np.empty(n_max)
    c[0] = np.exp(-0.5 * alpha * alpha)
    for n in range(1, n_max):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    return c


def displaced_coefficients_dalpha(alpha: float, n_max: int) -> np.ndarray:
    c = displaced_coefficients(alpha, n_max)
    d = -alpha * c
    d[1:] += np.sqrt(np.arange(1, n_max)) * c[:-1]
    return d


def momentum_matrix(sigma: float, n_max: int) -> np.ndarray:
    """Momentum operator in the Hermite-Gaussian basis of width ``sigma``.

    ``<m|P|n> = (i / 2 sigma) (sqrt(n+1) delta_{m,n+1} - sqrt(n) delta_{m,n-1})``.
    """
    if n_max < 2:
        raise DimensionTooSmall("n_max must be at least 2")
    s = np.sqrt(np.arange(1, n_max))
    P = np.zeros((n_max, n_max), dtype=complex)
    P[np.arange(1, n_max), np.arange(n_max - 1)] = 1j * s / (2 * sigma)
    P[np.arange(n_max - 1), np.arange(1, n_max)] = -1j * s / (2 * sigma)
    return P


def source_kets(cfg: SuperresConfig, x: float) -> tuple[np.ndarray, np.ndarray]:
    """Kets of the two sources displaced to ``+x/2`` and ``-x/2``."""
    a = x / (4 * cfg.sigma)
    tail = displacement_tail(abs(a), cfg.n_max)
    if tail >= TAIL_TOL:
        raise TruncationInsufficient(f"tail mass {tail:.2e} at x = {x}")
    return (
        displaced_coefficients(a, cfg.n_max).astype(complex),
        displaced_coefficients(-a, cfg.n_max).astype(complex),
    )


def source_kets_derivative(cfg: SuperresConfig, x: float) -> tuple[np.ndarray, np.ndarray]:
    a = x / (4 * cfg.sigma)
    k = 1.0 / (4 * cfg.sigma)
    return (
        k * displaced_coefficients_dalpha(a, cfg.n_max).astype(complex),
        -k * displaced_coefficients_dalpha(-a, cfg.n_max).astype(complex),
    )


def superres_state(cfg: SuperresConfig) -> ParametricState:
    q = cfg.q

    def rho(xv):
        plus, minus = source_kets(cfg, xv[0])
        return q * np.outer(plus, plus.conj()) + (1 - q) * np.outer(minus, minus.conj())

    def drho(xv, i):
        plus, minus = source_kets(cfg, xv[0])
        dplus, dminus = source_kets_derivative(cfg, xv[0])
        A = q * np.outer(dplus, plus.conj()) + (1 - q) * np.outer(dminus, minus.conj())
        return A + dagger(A)

    return ParametricState(
        rho, cfg.n_max, 1, drho, domain=[(-cfg.x_max, cfg.x_max)], name="superres"
    )


def superres_decomposition(cfg: SuperresConfig) -> ConvexFamily:
    """The two-source mixture as an (analytic) convex family."""

    def evaluate(x):
        plus, minus = source_kets(cfg, x)
        return ConvexDecomposition(np.array([cfg.q, 1 - cfg.q]), np.stack([plus, minus], axis=1))

    def derivative(x):
        dplus, dminus = source_kets_derivative(cfg, x)
        return np.zeros(2), np.stack([dplus, dminus], axis=1)

    return ConvexFamily(evaluate, derivative)


def superres_theory(x: float, q: float, lam: float, sigma: float = 1.0) -> tuple[float, float]:
    """Leading-order-in-x errors of the Rayleigh-limit postselection (x_star = 0)."""
    lam = _check_lambda(lam)
    if x < 0:
        raise ValueError("x must be nonnegative")
    r = np.sqrt(lam)
    eps0 = abs(2 * q - 1) * (1 - r) * x / (2 * np.sqrt(2) * r * sigma)
    eps1 = np.sqrt(2 - 4 * r + 3 * lam) * x / (8 * lam * sigma**2)
    return float(eps0), float(eps1)


def superres_qfi(sigma: float) -> float:
    return 1.0 / (4 * sigma**2)


def gaussian_moments(x: float, sigma: float) -> tuple[complex, complex]:
    """``(<P exp(-iPx)>, <exp(iPx)>)`` in the Gaussian ground mode."""
    c = np.exp(-x * x / (8 * sigma**2))
    return -1j * x * c / (4 * sigma**2), complex(c)


def superres_convex_elements(x: float, q: float, sigma: float = 1.0) -> np.ndarray:
    """``<psi_k| d rho |psi_l>`` for the two source kets, k, l in (+, -).

    With ``m = <P exp(-iPx)>`` and ``c = <exp(iPx)>``::

        <+|d rho|+> = -(1-q) i m c,  <-|d rho|-> = -q i m c,
        <+|d rho|-> = <-|d rho|+> = -i m / 2

    The diagonal of each source picks up only the other source's weight,
    because a displaced ket's own derivative is orthogonal to it.
    """
    m, c = gaussian_moments(x, sigma)
    return np.array(
        [[-(1 - q) * 1j * m * c, -1j * m / 2], [-1j * m / 2, -q * 1j * m * c]]
    )


# ---------------------------------------------------------------------------
# unitary encodings


@dataclass(frozen=True)
class UnitaryFamily:
    """``U(x) = exp(-i sum_i x_i G_i)`` acting on an initial state ``rho_init``."""

    generators: tuple[np.ndarray, ...]
    rho_init: np.ndarray

    def __post_init__(self):
        gens = tuple(hermitian_part(np.asarray(G, dtype=complex)) for G in self.generators)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "rho_init", np.asarray(self.rho_init, dtype=complex))

    @property
    def dim(self) -> int:
        return self.rho_init.shape[0]

    @property
    def num_params(self) -> int:
        return len(self.generators)

    @property
    def commuting(self) -> bool:
        G = self.generators
        return all(
            fro(G[i] @ G[j] - G[j] @ G[i]) < 1e-12
            for i in range(len(G))
            for j in range(i + 1, len(G))
        )

    def total_generator(self, x) -> np.ndarray:
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        return sum(xi * G for xi, G in zip(xv, self.generators))

    def unitary(self, x) -> np.ndarray:
        return expm_hermitian(self.total_generator(x), 1.0)


def unitary_derivative(F: UnitaryFamily, x, i: int) -> np.ndarray:
    """Exact ``d U / d x_i`` through the divided differences of ``exp(-i w)``."""
    w, W = np.linalg.eigh(hermitian_part(F.total_generator(x)))
    Gt = dagger(W) @ F.generators[i] @ W
    ea = np.exp(-1j * w)
    diff = w[:, None] - w[None, :]
    close = np.abs(diff) < 1e-12
    kernel = np.where(close, -1j * ea[:, None], (ea[:, None] - ea[None, :]) / np.where(close, 1.0, diff))
    return W @ (Gt * kernel) @ dagger(W)


def unitary_state(F: UnitaryFamily) -> ParametricState:
    """``rho(x) = U(x) rho_init U(x)^dag`` with analytic derivatives."""

    def rho(xv):
        U = F.unitary(xv)
        return U @ F.rho_init @ dagger(U)

    def deriv(xv, i):
        if F.commuting:
            r = rho(xv)
            G = F.generators[i]
            return -1j * (G @ r - r @ G)
        U = F.unitary(xv)
        A = unitary_derivative(F, xv, i) @ F.rho_init @ dagger(U)
        return A + dagger(A)

    return ParametricState(rho, F.dim, F.num_params, deriv, name="unitary")


def generator_at(F: UnitaryFamily, x, h: float = 1e-5, i: int = 0) -> np.ndarray:
    """``H(x) = i (d U^dag / dx_i) U`` by central differences."""
    xv = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    e = np.zeros_like(xv)
    e[i] = h
    dUd = (dagger(F.unitary(xv + e)) - dagger(F.unitary(xv - e))) / (2 * h)
    return hermitian_part(1j * dUd @ F.unitary(xv))


def qfi_unitary_mixed(
    spectral: SpectralData, H: np.ndarray, deg_tol: float = 1e-8, ortho_tol: float = 1e-8
) -> float:
    """QFI of ``U rho_init U^dag`` from the initial spectrum and the local generator.

    Every pair of distinct support eigenvectors must either share an eigenvalue
    or have a vanishing generator matrix element; otherwise the family is not
    quasi-pure and :class:`NotQuasiPure` names the pair.
    """
    phi = spectral.support
    q = spectral.q
    Hs = dagger(phi) @ H @ phi
    H2 = dagger(phi) @ H @ H @ phi
    total = 0.0
    for k in range(spectral.rank):
        total += q[k] * float(np.real(H2[k, k] - Hs[k, k] ** 2))
        for l in range(spectral.rank):
            if l == k:
                continue
            if abs(q[k] - q[l]) < deg_tol:
                total -= q[k] * abs(Hs[k, l]) ** 2
            elif abs(Hs[k, l]) >= ortho_tol:
                raise NotQuasiPure(
                    f"pair ({k}, {l}): distinct eigenvalues and <phi_k|H|phi_l> = {Hs[k, l]:.3e}",
                    pair=(k, l),
                )
    return 4.0 * total


def ancilla_qfi(F: UnitaryFamily, rank_tol: float = RANK_TOL) -> float:
    """``sum_n q_n I^Q[U |phi_n>]``: the QFI reached once each eigenvector carries its own ancilla label."""
    spectral = spectral_of(F.rho_init, rank_tol)
    phi = spectral.support
    G = F.generators[0]
    Hs = np.real(np.einsum("in,ij,jn->n", phi.conj(), G, phi))
    H2 = np.real(np.einsum("in,ij,jn->n", phi.conj(), G @ G, phi))
    return float(4.0 * np.dot(spectral.q, H2 - Hs**2))


def two_qubit_family(q1: float = 0.3) -> UnitaryFamily:
    """``exp(-i x sx sx)`` on ``q1 |00><00| + (1 - q1) |01><01|`` (basis 00, 01, 10, 11)."""
    if not 0.0 < q1 < 1.0:
        raise InvalidState(f"q1 must lie in (0, 1), got {q1}")
    rho_i = np.diag([q1, 1 - q1, 0.0, 0.0]).astype(complex)
    return UnitaryFamily((np.kron(SIGMA_X, SIGMA_X),), rho_i)


def two_qubit_state(q1: float = 0.3) -> ParametricState:
    return unitary_state(two_qubit_family(q1))


def rayleigh_two_qubit_povm_element(lam: float) -> np.ndarray:
    """``|1><1| + lam |0><0|`` on the first qubit."""
    lam = _check_lambda(lam)
    return np.kron(np.diag([lam, 1.0]), np.eye(2)).astype(complex)


def unitary_spectral_family(F: UnitaryFamily, rank_tol: float = RANK_TOL) -> ConvexFamily:
    """Spectral decomposition ``{q_n, U(x)|phi_n>}`` of a single-parameter unitary family."""
    spec = spectral_of(F.rho_init, rank_tol)
    q = spec.q / spec.q.sum()
    phi = spec.support
    G = F.generators[0]

    def evaluate(x):
        return ConvexDecomposition(q, F.unitary(x) @ phi)

    def derivative(x):
        return np.zeros_like(q), -1j * G @ F.unitary(x) @ phi

    return ConvexFamily(evaluate, derivative)


# ---------------------------------------------------------------------------
# ancilla protocol


def cs_gate(d_r: int, d_a: int) -> np.ndarray:
    """Controlled-sum permutation on labels ``|n>|k> -> |n>|n + k - 1>`` (1-based, mod d_a).

    The matrix acts on ``C^{d_r} (x) C^{d_a}`` with the system label as the
    most significant index.
    """
    if d_a < d_r:
        raise DimensionTooSmall(f"ancilla dimension {d_a} < rank {d_r}")
    dim = d_r * d_a
    P = np.zeros((dim, dim))
    for n in range(d_r):
        for k in range(d_a):
            P[n * d_a + (n + k) % d_a, n * d_a + k] = 1.0
    return P


def _shift(d_a: int, s: int) -> np.ndarray:
    return np.roll(np.eye(d_a), s % d_a, axis=0)


def correlate_with_ancilla(rho_i: np.ndarray, d_a: int, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Apply the controlled sum (in the eigenbasis of ``rho_i``) to ``rho_i (x) |1><1|``."""
    spec = spectral_of(rho_i, rank_tol)
    if d_a < spec.rank:
        raise DimensionTooSmall(f"ancilla dimension {d_a} < rank {spec.rank}")
    V = spec.eigenvectors
    d_s = V.shape[0]
    W = sum(
        np.kron(np.outer(V[:, n], V[:, n].conj()), _shift(d_a, n)) for n in range(d_s)
    )
    start = np.zeros((d_a, d_a))
    start[0, 0] = 1.0
    joint = np.kron(rho_i, start)
    return W @ joint @ dagger(W)


def ancilla_state(F: UnitaryFamily, d_a: int, rank_tol: float = RANK_TOL) -> ParametricState:
    """Classically correlated probe-ancilla state under ``U(x) (x) I``."""
    sigma_i = correlate_with_ancilla(F.rho_init, d_a, rank_tol)
    eye_a = np.eye(d_a)
    lifted = UnitaryFamily(tuple(np.kron(G, eye_a) for G in F.generators), sigma_i)
    S = unitary_state(lifted)
    return ParametricState(
        S.evaluator, S.dim, S.num_params, S.derivative, name="ancilla"
    )


def ancilla_spectral_family(
    F: UnitaryFamily,
    d_a: int,
    rank_tol: float = RANK_TOL,
    ancilla_kets: np.ndarray | None = None,
    weight_slopes: Sequence[float] | None = None,
) -> tuple[ParametricState, ConvexFamily]:
    """Family ``sum_n q_n(x) U(x)|phi_n><phi_n|U(x)^dag (x) |a_n><a_n|`` with its decomposition.

    With the default orthonormal ancilla kets and constant weights this is the
    ancilla-protocol state. Non-orthogonal ``ancilla_kets`` or nonzero
    ``weight_slopes`` (``q_n(x) ~ q_n exp(s_n x)``, renormalized) break the
    quasi-pure structure in a controlled way.
    """
    spec = spectral_of(F.rho_init, rank_tol)
    r = spec.rank
    if d_a < r:
        raise DimensionTooSmall(f"ancilla dimension {d_a} < rank {r}")
    q0 = spec.q / spec.q.sum()
    phi = spec.support
    A = np.eye(d_a, dtype=complex)[:, :r] if ancilla_kets is None else np.asarray(ancilla_kets, complex)
    A = A / np.linalg.norm(A, axis=0)
    s = np.zeros(r) if weight_slopes is None else np.asarray(weight_slopes, float)
    G = F.generators[0]

    def weights(x):
        w = q0 * np.exp(s * x)
        return w / w.sum()

    def dweights(x):
        w = weights(x)
        return w * (s - np.dot(w, s))

    def vectors(x):
        Vs = F.unitary(x) @ phi
        return np.stack([np.kron(Vs[:, n], A[:, n]) for n in range(r)], axis=1)

    def dvectors(x):
        Vs = -1j * G @ F.unitary(x) @ phi
        return np.stack([np.kron(Vs[:, n], A[:, n]) for n in range(r)], axis=1)

    def rho(xv):
        V = vectors(xv[0])
        return (V * weights(xv[0])) @ dagger(V)

    def drho(xv, i):
        x = xv[0]
        V, dV, w, dw = vectors(x), dvectors(x), weights(x), dweights(x)
        B = (dV * w) @ dagger(V)
        return (V * dw) @ dagger(V) + B + dagger(B)

    S = ParametricState(rho, F.dim * d_a, 1, drho, name="ancilla-family")
    fam = ConvexFamily(
        lambda x: ConvexDecomposition(weights(x), vectors(x)),
        lambda x: (dweights(x), dvectors(x)),
    )
    return S, fam
