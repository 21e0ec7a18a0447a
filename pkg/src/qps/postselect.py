"""Postselection POVMs, Kraus operators and postselection performance metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    IncompletePovm,
    QpsError,
    InvalidPovm,
    InvalidState,
    LambdaOutOfRange,
    NonPositiveInput,
    NotAProjector,
    NotPsd,
    NotUnitary,
    ZeroSuccessProbability,
)
from .linalg import RANK_TOL, dagger, fro, hermitian_part, is_projector, is_unitary, sqrt_psd
from .qfi import postselected_state, qfi
from .state import (
    ParametricState,
    as_params,
    density_at,
    derivative_at,
    spectral_at,
    tangent_projector,
)

MODES = ("kernel_binary", "tangent_binary", "multi", "multiparam", "pure")
RANK_PROBE = 1e-3

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PovmElement:
    id: str
    E: np.ndarray
    kept: bool
    kraus: np.ndarray | None = None


@dataclass(frozen=True)
class Povm:
    elements: list[PovmElement]
    mode: str = "custom"
    x_star: np.ndarray | None = None
    lambdas: tuple[float, ...] = ()
    mus: tuple[float, ...] = ()

    @property
    def kept(self) -> list[PovmElement]:
        return [e for e in self.elements if e.kept]

    @property
    def discarded(self) -> list[PovmElement]:
        return [e for e in self.elements if not e.kept]


@dataclass(frozen=True)
class MeasurementOperator:
    M: np.ndarray
    U: np.ndarray | None = None


@dataclass(frozen=True)
class PostselectionReport:
    p_success: float
    sigma: np.ndarray
    dsigma: np.ndarray
    eps0: float
    eps1: float
    qfi_rho: float
    qfi_post: float
    amplification_ratio: float
    norm_kind: str
    lam: float
    povm: Povm = field(repr=False, default=None)


class SaturationThreshold(NamedTuple):
    n_cr: float
    lambda_max: float
    advantageous: bool


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise LambdaOutOfRange(f"lambda must lie in (0, 1), got {lam!r}")
    return lam


def _check_projector(P: np.ndarray, name: str) -> np.ndarray:
    P = np.asarray(P, dtype=complex)
    if not is_projector(P, 1e-9):
        raise NotAProjector(f"{name} is not an orthogonal projector")
    return P


def _is_psd(A: np.ndarray, tol: float = 1e-12) -> bool:
    if not np.all(np.isfinite(A)):
        return False
    return float(np.linalg.eigvalsh(hermitian_part(A)).min()) >= -tol


def build_povm(
    mode: str,
    support: np.ndarray,
    aux: np.ndarray | None = None,
    lam: float | Sequence[float] = 0.01,
    mu: Sequence[float] | None = None,
    *,
    extra: np.ndarray | None = None,
    x_star=None,
) -> Povm:
    """Assemble a postselection POVM from the support projector and an auxiliary one.

    Modes:

    ``kernel_binary``   E = aux + lam * support, aux defaulting to I - support
    ``tangent_binary``  E = aux + lam * support with aux the tangent projector
    ``pure``            as ``tangent_binary`` with rank-one projectors
    ``multi``           E_w = mu_w * aux + lam_w * support for each kept outcome
    ``multiparam``      E_w = mu_w * I + (lam_w - mu_w) * support

    ``extra`` is an optional positive operator supported outside support and
    aux, added to the (single) kept element. The discard element
    ``I - sum(kept)`` is always appended.
    """
    if mode not in MODES:
        raise ValueError(f"unknown POVM mode {mode!r}; expected one of {MODES}")
    Pr = _check_projector(support, "support projector")
    d = Pr.shape[0]
    eye = np.eye(d, dtype=complex)
    lams = [_check_lambda(l) for l in np.atleast_1d(lam)]

    if mode == "multiparam":
        aux_P = eye
    elif aux is None:
        if mode not in ("kernel_binary", "multi"):
            raise NotAProjector(f"mode {mode!r} needs an auxiliary projector")
        aux_P = eye - Pr
    else:
        aux_P = _check_projector(aux, "auxiliary projector")
        if fro(aux_P @ Pr) > 1e-9:
            raise NotAProjector("auxiliary projector overlaps the support")

    if mode == "pure":
        if abs(np.trace(Pr).real - 1) > 1e-9 or abs(np.trace(aux_P).real - 1) > 1e-9:
            raise NotAProjector("pure mode needs rank-one projectors")

    if mode in ("multi", "multiparam"):
        if mu is None:
            mu = [1.0 / len(lams)] * len(lams)
        mu = [float(m) for m in mu]
        if len(mu) != len(lams):
            raise InvalidPovm("mu and lambda lists differ in length")
        if any(m < 0 for m in mu) or abs(sum(mu) - 1.0) > 1e-12:
            raise InvalidPovm(f"mu weights must be nonnegative and sum to 1, got {mu}")
        if mode == "multi":
            kept = [m * aux_P + l * Pr for m, l in zip(mu, lams)]
        else:
            kept = [m * eye + (l - m) * Pr for m, l in zip(mu, lams)]
    else:
        if len(lams) != 1:
            raise InvalidPovm(f"mode {mode!r} takes a single lambda")
        mu = [1.0]
        kept = [aux_P + lams[0] * Pr]

    if extra is not None:
        extra = hermitian_part(np.asarray(extra, dtype=complex))
        if not _is_psd(extra):
            raise NotPsd("extra operator is not positive")
        if fro(extra @ Pr) > 1e-9 or (mode != "multiparam" and fro(extra @ aux_P) > 1e-9):
            raise InvalidPovm("extra operator must be supported outside support and aux")
        kept[0] = kept[0] + extra

    discard = eye - sum(kept)
    if not _is_psd(discard):
        raise IncompletePovm(
            f"discard element not positive (min eig {np.linalg.eigvalsh(discard).min():.3e})"
        )
    elements = [PovmElement(f"keep{n}", hermitian_part(E), True) for n, E in enumerate(kept)]
    elements.append(PovmElement("discard", hermitian_part(discard), False))
    xs = None if x_star is None else np.atleast_1d(np.asarray(x_star, dtype=float))
    povm = Povm(elements, mode, xs, tuple(lams), tuple(mu))
    validate_povm(povm)
    return povm


def validate_povm(povm: Povm, tol: float = 1e-12) -> None:
    if not povm.elements:
        raise InvalidPovm("POVM has no elements")
    d = povm.elements[0].E.shape[0]
    total = np.zeros((d, d), dtype=complex)
    for el in povm.elements:
        if el.E.shape != (d, d):
            raise InvalidPovm(f"element {el.id} has shape {el.E.shape}")
        if not _is_psd(el.E, tol):
            raise InvalidPovm(f"element {el.id} is not positive")
        if el.kraus is not None and fro(dagger(el.kraus) @ el.kraus - el.E) > 1e-10:
            raise InvalidPovm(f"Kraus operator of {el.id} does not reproduce E")
        total = total + el.E
    err = fro(total - np.eye(d))
    if err > tol * max(1.0, d):
        raise InvalidPovm(f"elements sum to identity only within {err:.3e}")


def measurement_from_povm(E: np.ndarray, U: np.ndarray | None = None) -> MeasurementOperator:
    """Kraus operator ``M = U sqrt(E)``."""
    root = sqrt_psd(E)
    if U is None:
        return MeasurementOperator(root, None)
    U = np.asarray(U, dtype=complex)
    if not is_unitary(U):
        raise NotUnitary("U is not unitary")
    return MeasurementOperator(U @ root, U)


def apply_measurement(M, rho: np.ndarray) -> tuple[np.ndarray, float]:
    if isinstance(M, MeasurementOperator):
        M = M.M
    A = M @ rho @ dagger(M)
    p = float(np.real(np.trace(A)))
    if p <= 1e-14:
        raise ZeroSuccessProbability(f"success probability {p:.3e}")
    return hermitian_part(A / p), p


def lossless_povm(
    S: ParametricState,
    x_star,
    lam: float | Sequence[float],
    mode: str = "tangent_binary",
    mu: Sequence[float] | None = None,
    rank_tol: float = RANK_TOL,
    extra: np.ndarray | None = None,
) -> Povm:
    """POVM built from the support/tangent/kernel structure of ``rho(x_star)``.

    Logs a warning when the rank at ``x_star`` is below the rank a small step
    away (an isolated rank drop, e.g. coincident sources in imaging).
    """
    spectral = spectral_at(S, x_star, rank_tol)
    if local_rank_drop(S, x_star, spectral.rank, rank_tol):
        logger.warning("rank of rho drops to %d at x_star = %s; POVM uses the reduced support",
                       spectral.rank, x_star)
    Pr = spectral.support_projector
    if mode == "multiparam":
        return build_povm(mode, Pr, None, lam, mu, extra=extra, x_star=x_star)
    if mode == "kernel_binary":
        return build_povm(mode, Pr, spectral.kernel_projector, lam, extra=extra, x_star=x_star)
    Pt = tangent_projector(S, x_star, spectral)
    if mode == "pure" and spectral.rank != 1:
        raise InvalidState(f"pure mode needs a rank-one state, got rank {spectral.rank}")
    return build_povm(mode, Pr, Pt, lam, mu, extra=extra, x_star=x_star)


def local_rank_drop(S: ParametricState, x_star, rank: int, rank_tol: float = RANK_TOL) -> bool:
    """True if ``rho`` has higher rank at ``x_star +- RANK_PROBE`` along any parameter."""
    xv = as_params(x_star, S.num_params)
    step = RANK_PROBE * max(1.0, float(np.max(np.abs(xv))))
    for i in range(S.num_params):
        for sgn in (1.0, -1.0):
            probe = xv.copy()
            probe[i] += sgn * step
            try:
                if spectral_at(S, probe, rank_tol).rank > rank:
                    return True
            except QpsError:
                continue
    return False


def matrix_norm(A: np.ndarray, kind: str) -> float:
    if kind == "frobenius":
        return fro(A)
    if kind == "spectral":
        return float(np.linalg.norm(A, 2))
    raise ValueError(f"unknown norm kind {kind!r}")


def postselected_derivative_fd(
    M: np.ndarray, S: ParametricState, x, h: float | None = None
) -> np.ndarray:
    """Central difference of ``sigma(x) = M rho(x) M^dag / p(x)`` with ``M`` frozen."""
    xv = as_params(x, S.num_params)
    step = h if h is not None else S.fd_step * max(1.0, abs(xv[0]))
    plus, _ = apply_measurement(M, density_at(S, xv + step))
    minus, _ = apply_measurement(M, density_at(S, xv - step))
    return hermitian_part((plus - minus) / (2 * step))


def postselection_report(
    S: ParametricState,
    x,
    x_star,
    lam: float,
    norm_kind: str = "frobenius",
    h: float | None = None,
    *,
    povm: Povm | None = None,
    U: np.ndarray | None = None,
    dsigma_method: str = "quotient",
    rank_tol: float = RANK_TOL,
) -> PostselectionReport:
    """Errors of the binary postselection ``M = U sqrt(Pi_t + lam Pi_r)`` built at ``x_star``.

    ``eps0 = |sigma - rho|`` and ``eps1 = |d sigma - d rho / sqrt(lam)|`` in the
    chosen norm. ``dsigma_method`` is ``"quotient"`` (exact quotient rule on the
    state derivative) or ``"fd"`` (central difference of sigma).
    """
    lam = _check_lambda(lam)
    if povm is None:
        povm = lossless_povm(S, x_star, lam, "tangent_binary", rank_tol=rank_tol)
    E = povm.kept[0].E
    M = measurement_from_povm(E, U).M
    rho = density_at(S, x)
    drho = derivative_at(S, x) if h is None else derivative_at(S, x, method="fd", h=h)
    sigma, p, dsigma, _ = postselected_state(M, rho, drho)
    if p <= 1e-14:
        raise ZeroSuccessProbability(f"success probability {p:.3e}")
    if dsigma_method == "fd":
        dsigma = postselected_derivative_fd(M, S, x, h)
    elif dsigma_method != "quotient":
        raise ValueError(f"unknown dsigma_method {dsigma_method!r}")
    eps0 = matrix_norm(sigma - rho, norm_kind)
    eps1 = matrix_norm(dsigma - drho / np.sqrt(lam), norm_kind)
    q_rho = qfi(rho, drho, rank_tol)
    q_post = qfi(sigma, dsigma, rank_tol)
    ratio = lam * q_post / q_rho if q_rho > 0 else float("nan")
    return PostselectionReport(p, sigma, dsigma, eps0, eps1, q_rho, q_post, ratio, norm_kind, lam, povm)


def saturation_threshold(N: float, T: float, gamma: float) -> SaturationThreshold:
    """Detector-saturation threshold ``N_cr = T gamma`` and the largest useful lambda."""
    if N <= 0 or T <= 0 or gamma <= 0:
        raise NonPositiveInput("N, T and gamma must be positive")
    n_cr = T * gamma
    return SaturationThreshold(n_cr, min(1.0, n_cr / N), N > n_cr)
