"""Quasi-pure structure: the support block of d rho and its equivalent criteria."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import RANK_TOL, dagger, fro
from .qfi import QUASIPURE_TOL, covariant_derivatives, eigenvector_derivatives
from .state import (
    DEG_TOL,
    ConvexDecomposition,
    ParametricState,
    density_at,
    derivative_at,
    spectral_of,
)

APPROX_TOL = 1e-3


@dataclass(frozen=True)
class PairCheck:
    k: int
    l: int
    gap: float
    overlap: float
    degenerate: bool
    passed: bool


@dataclass(frozen=True)
class QuasiPureReport:
    residual_spectral: float
    eigenvalue_drift: float
    pairwise: list[PairCheck]
    gencoder_residual: float
    convex_residual: float | None
    convex_matrix: np.ndarray | None
    tol: float
    ortho_tol: float
    rank: int
    verdict_obs1: bool = field(default=False)
    verdict_obs2: bool = field(default=False)
    verdict_convex: bool | None = field(default=None)

    @property
    def verdict(self) -> bool:
        return self.residual_spectral < self.tol

    @property
    def consistent(self) -> bool:
        """True when every available criterion reaches the same verdict."""
        verdicts = {self.verdict, self.verdict_obs1, self.verdict_obs2}
        if self.verdict_convex is not None:
            verdicts.add(self.verdict_convex)
        return len(verdicts) == 1


def residual_spectral(
    S: ParametricState, x, rank_tol: float = RANK_TOL, *, i: int = 0, **kw
) -> float:
    """Frobenius norm of ``Pi_r (d rho) Pi_r``."""
    spectral = spectral_of(density_at(S, x), rank_tol)
    Pr = spectral.support_projector
    drho = derivative_at(S, x, i, **kw)
    return fro(Pr @ drho @ Pr)


def _group_drift(spectral, drho) -> float:
    drift = 0.0
    for g in spectral.groups:
        V = spectral.eigenvectors[:, list(g)]
        block = dagger(V) @ drho @ V
        drift = max(drift, float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (block + dagger(block)))))))
    return drift


def criteria_report(
    S: ParametricState,
    x,
    decomp: ConvexDecomposition | None = None,
    *,
    tol: float = QUASIPURE_TOL,
    ortho_tol: float | None = None,
    rank_tol: float = RANK_TOL,
    deg_tol: float = DEG_TOL,
    i: int = 0,
) -> QuasiPureReport:
    """Evaluate the spectral, eigenvalue/orthogonality, covariant-derivative and
    convex-decomposition criteria at ``x``.

    A pair (k, l) passes the orthogonality test when it lies in one degeneracy
    group or ``|<d phi_k|phi_l>| < ortho_tol`` (defaults to ``tol``).
    """
    ortho_tol = tol if ortho_tol is None else ortho_tol
    rho = density_at(S, x)
    drho = derivative_at(S, x, i)
    spectral = spectral_of(rho, rank_tol, deg_tol)
    Pr = spectral.support_projector
    res = fro(Pr @ drho @ Pr)

    drift = _group_drift(spectral, drho) if spectral.rank else 0.0
    derivs = eigenvector_derivatives(spectral, drho)
    phis = spectral.support
    # overlaps[k, l] = <d phi_k | phi_l>
    overlaps = dagger(derivs) @ phis
    pairs = []
    q = spectral.q
    for k in range(spectral.rank):
        for l in range(spectral.rank):
            if k == l:
                continue
            degenerate = l in spectral.group_of(k)
            ov = float(abs(overlaps[k, l]))
            pairs.append(
                PairCheck(k, l, float(abs(q[k] - q[l])), ov, degenerate, degenerate or ov < ortho_tol)
            )
    Dphi = covariant_derivatives(spectral, derivs)
    gencoder = float(np.max(np.abs(dagger(Dphi) @ phis))) if spectral.rank else 0.0

    convex_res = None
    convex_mat = None
    if decomp is not None:
        decomp.check(rho)
        convex_mat = dagger(decomp.vectors) @ drho @ decomp.vectors
        convex_res = float(np.max(np.abs(convex_mat)))

    return QuasiPureReport(
        residual_spectral=res,
        eigenvalue_drift=drift,
        pairwise=pairs,
        gencoder_residual=gencoder,
        convex_residual=convex_res,
        convex_matrix=convex_mat,
        tol=tol,
        ortho_tol=ortho_tol,
        rank=spectral.rank,
        verdict_obs1=drift < tol and all(p.passed for p in pairs),
        verdict_obs2=drift < tol and gencoder < ortho_tol,
        verdict_convex=None if convex_res is None else convex_res < tol,
    )


def is_quasipure(S: ParametricState, x, tol: float = QUASIPURE_TOL, rank_tol: float = RANK_TOL) -> bool:
    return residual_spectral(S, x, rank_tol) < tol


def is_approximately_quasipure(S: ParametricState, x, tol: float = APPROX_TOL) -> bool:
    """Quasi-pure test where eigenvalues below ``tol`` are also treated as kernel.

    This is the notion relevant near a local rank drop, e.g. two nearly
    coincident point sources whose second eigenvalue is O(x^2).
    """
    return residual_spectral(S, x, rank_tol=tol) < tol
