"""Quantum/classical Fisher information, SLDs and covariant derivatives."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    NeedTwoParams,
    NotQuasiPure,
    QpsError,
    ZeroProbability,
)
from .linalg import RANK_TOL, dagger, eig_hermitian, fro, hermitian_part, sqrt_psd
from .state import (
    ConvexFamily,
    ParametricState,
    SpectralData,
    as_params,
    density_at,
    derivative_at,
    spectral_at,
    spectral_of,
)

if TYPE_CHECKING:  # pragma: no cover
    from .postselect import Povm

logger = logging.getLogger(__name__)

QUASIPURE_TOL = 1e-8
P_FLOOR = 1e-12


@dataclass(frozen=True)
class OutcomeInfo:
    id: str
    probability: float
    dp: float
    cfi: float
    post_qfi: float
    kept: bool = True
    flagged: bool = False


@dataclass(frozen=True)
class QfiReport:
    sld: np.ndarray
    qfi: float
    per_outcome: list[OutcomeInfo] = field(default_factory=list)
    total_ensemble_qfi: float = 0.0

    @property
    def kept_qfi(self) -> float:
        """Sum over kept outcomes of p * I^Q[sigma]."""
        return sum(o.probability * o.post_qfi for o in self.per_outcome if o.kept)


def _clamp_nonneg(value: float, what: str) -> float:
    if value < -P_FLOOR * max(1.0, abs(value)):
        raise QpsError(f"{what} is negative: {value:.3e}")
    return max(value, 0.0)


def sld_general(rho: np.ndarray, drho: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Symmetric logarithmic derivative solving ``drho = (L rho + rho L) / 2``.

    Matrix elements with ``q_k + q_l <= rank_tol`` (kernel-kernel block) are set
    to zero.
    """
    rho = np.asarray(rho, dtype=complex)
    drho = np.asarray(drho, dtype=complex)
    if rho.shape != drho.shape:
        raise DimensionMismatch(f"rho {rho.shape} vs drho {drho.shape}")
    spec = eig_hermitian(rho)
    q = np.clip(spec.eigenvalues, 0.0, None)
    V = spec.eigenvectors
    D = dagger(V) @ hermitian_part(drho) @ V
    denom = q[:, None] + q[None, :]
    mask = denom > rank_tol
    Leig = np.zeros_like(D)
    Leig[mask] = 2.0 * D[mask] / denom[mask]
    return hermitian_part(V @ Leig @ dagger(V))


def qfi_from_sld(rho: np.ndarray, L: np.ndarray) -> float:
    rho = np.asarray(rho)
    L = np.asarray(L)
    if rho.shape != L.shape:
        raise DimensionMismatch(f"rho {rho.shape} vs L {L.shape}")
    val = float(np.real(np.trace(rho @ L @ L)))
    return _clamp_nonneg(val, "QFI")


def qfi(rho: np.ndarray, drho: np.ndarray, rank_tol: float = RANK_TOL) -> float:
    return qfi_from_sld(rho, sld_general(rho, drho, rank_tol))


def state_qfi(S: ParametricState, x, i: int = 0, **kw) -> float:
    return qfi(density_at(S, x), derivative_at(S, x, i, **kw))


def pure_qfi(psi: np.ndarray, dpsi: np.ndarray) -> float:
    """4 (<dpsi|dpsi> - |<psi|dpsi>|^2) for a normalized ket."""
    psi = np.asarray(psi).reshape(-1)
    dpsi = np.asarray(dpsi).reshape(-1)
    ov = np.vdot(psi, dpsi)
    return 4.0 * float(np.real(np.vdot(dpsi, dpsi)) - abs(ov) ** 2)


def cfi_outcome(p: float, dp: float) -> float:
    if p <= 1e-300:
        raise ZeroProbability(f"outcome probability {p!r} is zero")
    return dp * dp / p


# ---------------------------------------------------------------------------
# eigenvector derivatives and covariant derivatives


def eigenvector_derivatives(spectral: SpectralData, drho: np.ndarray) -> np.ndarray:
    """Derivatives of the support eigenvectors from first-order perturbation theory.

    Column ``n`` is ``sum_m |phi_m> <phi_m|drho|phi_n> / (q_n - q_m)`` over all
    eigenvectors ``m`` outside the degeneracy group of ``n`` (kernel vectors
    have ``q_m = 0``). The gauge inside each group is fixed to zero.
    """
    V = spectral.eigenvectors
    q_all = np.where(np.arange(V.shape[1]) < spectral.rank, spectral.eigenvalues, 0.0)
    D = dagger(V) @ drho @ V
    out = np.zeros((V.shape[0], spectral.rank), dtype=complex)
    for n in range(spectral.rank):
        group = set(spectral.group_of(n))
        coeff = np.zeros(V.shape[1], dtype=complex)
        for m in range(V.shape[1]):
            if m in group:
                continue
            coeff[m] = D[m, n] / (q_all[n] - q_all[m])
        out[:, n] = V @ coeff
    return out


def _align(ref: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Rotate ``other``'s columns by the unitary closest to ``other^dag ref``."""
    U, _, Wh = np.linalg.svd(dagger(other) @ ref)
    return other @ (U @ Wh)


def eigenvector_derivatives_fd(
    S: ParametricState,
    x,
    spectral: SpectralData | None = None,
    i: int = 0,
    h: float | None = None,
) -> np.ndarray:
    """Central-difference derivatives of the support eigenvectors.

    Eigenvectors at ``x +- h`` are gauge-aligned to those at ``x`` group by group
    (phase alignment for simple eigenvalues, a polar rotation for degenerate
    groups), so the result is a derivative along a smooth gauge.
    """
    xv = as_params(x, S.num_params)
    if spectral is None:
        spectral = spectral_at(S, xv)
    step = h if h is not None else S.fd_step * max(1.0, abs(xv[i]))
    e = np.zeros_like(xv)
    e[i] = step
    plus = spectral_of(density_at(S, xv + e), spectral.rank_tol, spectral.deg_tol)
    minus = spectral_of(density_at(S, xv - e), spectral.rank_tol, spectral.deg_tol)
    out = np.zeros((S.dim, spectral.rank), dtype=complex)
    for g in spectral.groups:
        idx = list(g)
        ref = spectral.eigenvectors[:, idx]
        vp = _align(ref, plus.eigenvectors[:, idx])
        vm = _align(ref, minus.eigenvectors[:, idx])
        out[:, idx] = (vp - vm) / (2.0 * step)
    return out


def gen_cov_derivative(spectral: SpectralData, dphi: np.ndarray, n: int) -> np.ndarray:
    """Remove the component of ``dphi`` inside the degenerate subspace of eigenvector ``n``."""
    if not 0 <= n < spectral.rank:
        raise IndexOutOfRange(f"eigenvector index {n} outside support of rank {spectral.rank}")
    dphi = np.asarray(dphi, dtype=complex).reshape(-1)
    return dphi - spectral.group_projector(n) @ dphi


def covariant_derivatives(spectral: SpectralData, derivs: np.ndarray) -> np.ndarray:
    derivs = np.asarray(derivs, dtype=complex)
    return np.stack(
        [gen_cov_derivative(spectral, derivs[:, n], n) for n in range(spectral.rank)], axis=1
    ) if spectral.rank else np.zeros((spectral.eigenvectors.shape[0], 0), dtype=complex)


def support_block_residual(spectral: SpectralData, drho: np.ndarray) -> float:
    Pr = spectral.support_projector
    return fro(Pr @ drho @ Pr)


def _require_quasipure(spectral, drho, tol):
    if drho is None:
        return
    r = support_block_residual(spectral, drho)
    if r >= tol:
        raise NotQuasiPure(f"quasi-pure residual {r:.3e} >= {tol:.1e}")


def sld_quasipure(
    spectral: SpectralData,
    derivs: np.ndarray,
    drho: np.ndarray | None = None,
    tol: float = QUASIPURE_TOL,
) -> np.ndarray:
    """Closed-form SLD ``2 sum_n (|D phi_n><phi_n| + h.c.)`` of a quasi-pure state.

    ``derivs`` holds the eigenvector derivatives as columns. When ``drho`` is
    given the quasi-pure precondition is checked against it.
    """
    _require_quasipure(spectral, drho, tol)
    Dphi = covariant_derivatives(spectral, derivs)
    A = Dphi @ dagger(spectral.support)
    return 2.0 * (A + dagger(A))


def qfi_quasipure(
    spectral: SpectralData,
    derivs: np.ndarray,
    drho: np.ndarray | None = None,
    tol: float = QUASIPURE_TOL,
) -> float:
    _require_quasipure(spectral, drho, tol)
    Dphi = covariant_derivatives(spectral, derivs)
    norms = np.real(np.sum(np.conj(Dphi) * Dphi, axis=0))
    return 4.0 * float(np.dot(spectral.q, norms))


# ---------------------------------------------------------------------------
# measurement-induced decomposition


def postselected_state(M: np.ndarray, rho: np.ndarray, drho: np.ndarray | None = None):
    """``(sigma, p, dsigma, dp)`` for Kraus operator ``M`` held fixed in x."""
    A = M @ rho @ dagger(M)
    p = float(np.real(np.trace(A)))
    if drho is None:
        return A / p, p, None, None
    B = M @ drho @ dagger(M)
    dp = float(np.real(np.trace(B)))
    sigma = A / p
    dsigma = (B - sigma * dp) / p
    return sigma, p, hermitian_part(dsigma), dp


def ensemble_decomposition(
    S: ParametricState,
    x,
    povm: "Povm",
    *,
    method: str | None = None,
    h: float | None = None,
    rank_tol: float = RANK_TOL,
) -> QfiReport:
    """Per-outcome CFI plus post-measurement QFI for ``povm`` applied to ``rho(x)``.

    The Kraus operators ``M = U sqrt(E)`` are frozen while x varies.
    Outcomes with probability below 1e-12 contribute zero and are flagged.
    """
    from .postselect import validate_povm

    validate_povm(povm)
    rho = density_at(S, x)
    drho = derivative_at(S, x, method=method, h=h)
    L = sld_general(rho, drho, rank_tol)
    outcomes = []
    total = 0.0
    for el in povm.elements:
        M = el.kraus if el.kraus is not None else sqrt_psd(el.E)
        p_raw = float(np.real(np.trace(rho @ el.E)))
        if p_raw < P_FLOOR:
            logger.info("outcome %s has probability %.3e; skipped", el.id, p_raw)
            outcomes.append(OutcomeInfo(el.id, max(p_raw, 0.0), 0.0, 0.0, 0.0, el.kept, True))
            continue
        sigma, p, dsigma, dp = postselected_state(M, rho, drho)
        c = cfi_outcome(p, dp)
        post = qfi(sigma, dsigma, rank_tol)
        outcomes.append(OutcomeInfo(el.id, p, dp, c, post, el.kept))
        total += c + p * post
    return QfiReport(L, qfi_from_sld(rho, L), outcomes, total)


# ---------------------------------------------------------------------------
# convexity and multi-parameter compatibility


def _decomposition_derivative(family: ConvexFamily, x: float, h: float):
    if family.derivative is not None:
        dw, dV = family.derivative(x)
        return np.asarray(dw, dtype=float), np.asarray(dV, dtype=complex)
    ref = family.evaluate(x).vectors

    def diff(step):
        plus = family.evaluate(x + step)
        minus = family.evaluate(x - step)
        # pin each column's phase to the center point
        def pin(V):
            ov = np.sum(np.conj(ref) * V, axis=0)
            return V * np.where(np.abs(ov) > 0, np.conj(ov) / np.abs(ov), 1.0)

        dw = (plus.weights - minus.weights) / (2 * step)
        dV = (pin(plus.vectors) - pin(minus.vectors)) / (2 * step)
        return dw, dV

    w1, V1 = diff(h)
    w2, V2 = diff(h / 2)
    return (4 * w2 - w1) / 3, (4 * V2 - V1) / 3


def convexity_sum(family: ConvexFamily, x: float, h: float = 1e-3) -> float:
    """``sum_n (I^cl[p_n] + p_n I^Q[psi_n])`` for the decomposition at x."""
    dec = family.evaluate(x)
    dw, dV = _decomposition_derivative(family, x, h)
    total = 0.0
    for n, p in enumerate(dec.weights):
        total += cfi_outcome(p, dw[n]) + p * pure_qfi(dec.vectors[:, n], dV[:, n])
    return total


def convexity_gap(family: ConvexFamily, S: ParametricState, x, h: float = 1e-3) -> float:
    """Generalized convexity bound minus the QFI; nonnegative up to roundoff."""
    xv = as_params(x, S.num_params)
    rho = density_at(S, xv)
    dec = family.evaluate(float(xv[0]))
    dec.check(rho)
    bound = convexity_sum(family, float(xv[0]), h)
    return bound - state_qfi(S, xv)


def param_covariant_derivatives(
    S: ParametricState, x, spectral: SpectralData | None = None, **kw
) -> list[np.ndarray]:
    """Generalized covariant derivatives of the support eigenvectors for every parameter."""
    if spectral is None:
        spectral = spectral_at(S, x)
    out = []
    for i in range(S.num_params):
        drho = derivative_at(S, x, i, **kw)
        out.append(covariant_derivatives(spectral, eigenvector_derivatives(spectral, drho)))
    return out


def partial_comm_residual(
    S: ParametricState,
    x,
    spectral: SpectralData | None = None,
    cov: list[np.ndarray] | None = None,
    tol: float = QUASIPURE_TOL,
) -> float:
    """max |<D_i phi_k|D_j phi_l> - <D_j phi_k|D_i phi_l>| over k, l and i < j."""
    if S.num_params < 2:
        raise NeedTwoParams("partial commutativity needs at least two parameters")
    if spectral is None:
        spectral = spectral_at(S, x)
    for i in range(S.num_params):
        _require_quasipure(spectral, derivative_at(S, x, i), tol)
    if cov is None:
        cov = param_covariant_derivatives(S, x, spectral)
    return pair_residual(cov)


def pair_residual(cov: list[np.ndarray]) -> float:
    worst = 0.0
    for i in range(len(cov)):
        for j in range(i + 1, len(cov)):
            Gij = dagger(cov[i]) @ cov[j]
            Gji = dagger(cov[j]) @ cov[i]
            if Gij.size:
                worst = max(worst, float(np.max(np.abs(Gij - Gji))))
    return worst
