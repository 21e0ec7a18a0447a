"""Parametric density-operator families and their spectral structure.

A :class:`ParametricState` maps a parameter vector ``x`` to a density matrix
``rho(x)`` and optionally supplies analytic derivatives; otherwise central
differences are used. :func:`spectral_at` splits the Hilbert space into the
support (positive eigenvalues) and kernel of ``rho(x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import BadDecomposition, DomainEdge, InvalidState
from .linalg import RANK_TOL, dagger, eig_hermitian, fro, hermitian_part, span_projector

logger = logging.getLogger(__name__)

DEG_TOL = 1e-8
FD_STEP = 1e-5


def as_params(x, num_params: int = 1) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if arr.size != num_params:
        raise InvalidState(f"expected {num_params} parameter(s), got {arr.size}")
    return arr


@dataclass(frozen=True)
class ParametricState:
    """A family ``x -> rho(x)`` of density matrices.

    ``evaluator`` receives a 1-d float array of length ``num_params``.
    ``derivative`` (optional) receives ``(x, i)`` and returns the analytic
    ``d rho / d x_i``. ``domain`` holds one ``(lo, hi)`` pair per parameter.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    dim: int
    num_params: int = 1
    derivative: Callable[[np.ndarray, int], np.ndarray] | None = None
    fd_step: float = FD_STEP
    domain: Sequence[tuple[float, float]] | None = None
    name: str = ""

    def with_fd(self, fd_step: float = FD_STEP) -> "ParametricState":
        """Copy of this family that always differentiates by central differences."""
        return ParametricState(
            self.evaluator, self.dim, self.num_params, None, fd_step, self.domain, self.name
        )


@dataclass(frozen=True)
class SpectralData:
    """Eigen-structure of ``rho`` at one parameter point.

    ``groups`` partitions the support indices ``0..rank-1`` into runs of
    (numerically) equal eigenvalues.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int
    support_projector: np.ndarray
    kernel_projector: np.ndarray
    groups: tuple[tuple[int, ...], ...]
    rank_tol: float = RANK_TOL
    deg_tol: float = DEG_TOL

    @property
    def q(self) -> np.ndarray:
        return self.eigenvalues[: self.rank]

    @property
    def support(self) -> np.ndarray:
        return self.eigenvectors[:, : self.rank]

    @property
    def kernel(self) -> np.ndarray:
        return self.eigenvectors[:, self.rank :]

    def group_of(self, n: int) -> tuple[int, ...]:
        for g in self.groups:
            if n in g:
                return g
        raise IndexError(n)

    def group_projector(self, n: int) -> np.ndarray:
        V = self.eigenvectors[:, list(self.group_of(n))]
        return V @ dagger(V)

    def reconstruct(self) -> np.ndarray:
        V = self.support
        return (V * self.q) @ dagger(V)


class RankScan(NamedTuple):
    global_rank: int
    local_ranks: list[int]
    warnings: list[str]


@dataclass(frozen=True)
class ConvexDecomposition:
    """``rho = sum_n weights[n] |vectors[:, n]><vectors[:, n]|``."""

    weights: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        V = np.asarray(self.vectors, dtype=complex)
        if V.ndim != 2 or V.shape[1] != w.size:
            raise BadDecomposition("weights and vector columns differ in count")
        if np.any(w <= 0):
            raise BadDecomposition("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise BadDecomposition(f"weights sum to {w.sum():.12f}")
        norms = np.linalg.norm(V, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise BadDecomposition("vectors must be normalized")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vectors", V)

    def density(self) -> np.ndarray:
        V = self.vectors
        return (V * self.weights) @ dagger(V)

    def check(self, rho: np.ndarray, tol: float = 1e-9) -> None:
        err = fro(self.density() - rho)
        if err > tol:
            raise BadDecomposition(f"decomposition misses rho by {err:.3e}")


@dataclass(frozen=True)
class ConvexFamily:
    """``x -> ConvexDecomposition`` with an optional analytic derivative.

    ``derivative(x)`` returns ``(dweights, dvectors)``.
    """

    evaluate: Callable[[float], ConvexDecomposition]
    derivative: Callable[[float], tuple[np.ndarray, np.ndarray]] | None = None


def validate_density(rho: np.ndarray, name: str = "rho") -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidState(f"{name}: not a square matrix (shape {rho.shape})")
    if not np.all(np.isfinite(rho)):
        raise InvalidState(f"{name}: non-finite entries")
    tr = np.trace(rho)
    if abs(tr - 1.0) > 1e-10:
        raise InvalidState(f"{name}: trace check failed, Tr = {tr:.12g}")
    herm = fro(rho - dagger(rho))
    if herm > 1e-10:
        raise InvalidState(f"{name}: Hermiticity check failed, residual {herm:.3e}")
    wmin = np.linalg.eigvalsh(hermitian_part(rho)).min()
    if wmin < -1e-9:
        raise InvalidState(f"{name}: positivity check failed, min eigenvalue {wmin:.3e}")
    return rho


def _check_domain(S: ParametricState, x: np.ndarray, what: str) -> None:
    if S.domain is None:
        return
    for i, (lo, hi) in enumerate(S.domain):
        if not lo <= x[i] <= hi:
            raise DomainEdge(f"{what}: x[{i}] = {x[i]!r} outside [{lo}, {hi}]")


def density_at(S: ParametricState, x) -> np.ndarray:
    xv = as_params(x, S.num_params)
    _check_domain(S, xv, "density_at")
    rho = S.evaluator(xv)
    return validate_density(rho, name=S.name or "rho")


def _central_difference(S: ParametricState, x: np.ndarray, i: int, h: float) -> np.ndarray:
    e = np.zeros_like(x)
    e[i] = h
    _check_domain(S, x + e, "finite-difference stencil")
    _check_domain(S, x - e, "finite-difference stencil")
    return (density_at(S, x + e) - density_at(S, x - e)) / (2.0 * h)


def derivative_at(
    S: ParametricState,
    x,
    i: int = 0,
    *,
    method: str | None = None,
    h: float | None = None,
    richardson: bool = False,
) -> np.ndarray:
    """``d rho / d x_i`` at ``x``.

    ``method`` is ``"analytic"``, ``"fd"`` or ``None`` (analytic when the family
    provides it). The central-difference step defaults to
    ``fd_step * max(1, |x_i|)``; ``richardson`` combines steps h and h/2.
    """
    xv = as_params(x, S.num_params)
    if not 0 <= i < S.num_params:
        raise InvalidState(f"parameter index {i} out of range")
    if method is None:
        method = "analytic" if S.derivative is not None else "fd"
    if method == "analytic":
        if S.derivative is None:
            raise InvalidState("family has no analytic derivative")
        _check_domain(S, xv, "derivative_at")
        d = np.asarray(S.derivative(xv, i), dtype=complex)
    elif method == "fd":
        step = h if h is not None else S.fd_step * max(1.0, abs(xv[i]))
        d = _central_difference(S, xv, i, step)
        if richardson:
            d = (4.0 * _central_difference(S, xv, i, step / 2) - d) / 3.0
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    if abs(np.trace(d)) > 1e-8:
        raise InvalidState(f"derivative not traceless: Tr = {np.trace(d):.3e}")
    return hermitian_part(d)


def degeneracy_groups(q: np.ndarray, deg_tol: float) -> tuple[tuple[int, ...], ...]:
    """Chain descending eigenvalues whose neighbours differ by < deg_tol * q[0]."""
    if q.size == 0:
        return ()
    thresh = deg_tol * max(q[0], 0.0)
    groups = [[0]]
    for n in range(1, q.size):
        if q[n - 1] - q[n] < thresh:
            groups[-1].append(n)
        else:
            groups.append([n])
    return tuple(tuple(g) for g in groups)


def spectral_of(
    rho: np.ndarray, rank_tol: float = RANK_TOL, deg_tol: float = DEG_TOL
) -> SpectralData:
    """Spectral data of a density matrix (no family needed)."""
    spec = eig_hermitian(rho)
    w = spec.eigenvalues
    V = spec.eigenvectors
    rank = int(np.sum(w > rank_tol))
    Vr = V[:, :rank]
    Pr = hermitian_part(Vr @ dagger(Vr))
    Pk = np.eye(V.shape[0], dtype=complex) - Pr
    return SpectralData(
        eigenvalues=w,
        eigenvectors=V,
        rank=rank,
        support_projector=Pr,
        kernel_projector=Pk,
        groups=degeneracy_groups(w[:rank], deg_tol),
        rank_tol=rank_tol,
        deg_tol=deg_tol,
    )


def spectral_at(
    S: ParametricState, x, rank_tol: float = RANK_TOL, deg_tol: float = DEG_TOL
) -> SpectralData:
    return spectral_of(density_at(S, x), rank_tol, deg_tol)


def global_rank_scan(S: ParametricState, grid, rank_tol: float = RANK_TOL) -> RankScan:
    """Largest local rank over ``grid``; points with lower local rank are flagged."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    ranks = [spectral_at(S, x, rank_tol).rank for x in grid]
    top = max(ranks)
    warnings = [
        f"local rank {r} < global rank {top} at x = {x!r}"
        for x, r in zip(grid, ranks)
        if r < top
    ]
    for w in warnings:
        logger.warning(w)
    return RankScan(top, ranks, warnings)


def tangent_projector(
    S: ParametricState,
    x,
    spectral: SpectralData | None = None,
    *,
    drho: np.ndarray | None = None,
    tol: float = RANK_TOL,
) -> np.ndarray:
    """Projector onto span of the kernel parts of the covariant derivatives.

    Uses ``Pi_k |d phi_n> = Pi_k (d rho) |phi_n> / q_n``, which holds for every
    support eigenvector independently of the eigenvector gauge.
    """
    if S.num_params != 1:
        raise InvalidState("tangent_projector is defined for single-parameter families")
    if spectral is None:
        spectral = spectral_at(S, x)
    if drho is None:
        drho = derivative_at(S, x)
    cols = spectral.kernel_projector @ drho @ spectral.support / spectral.q
    if spectral.rank == 0 or fro(cols) == 0.0:
        return np.zeros((S.dim, S.dim), dtype=complex)
    P = span_projector(cols, tol)
    # remove numerical leakage into the support
    Pk = spectral.kernel_projector
    return hermitian_part(Pk @ P @ Pk)
