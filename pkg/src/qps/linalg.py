"""Dense complex matrix helpers: Hermitian eigensolver, PSD square root, projectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, NonHermitianInput, NotPsd

RANK_TOL = 1e-10


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted descending with matching, phase-fixed eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def dagger(A: np.ndarray) -> np.ndarray:
    return np.conj(A).T


def fro(A: np.ndarray) -> float:
    return float(np.linalg.norm(A))


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + dagger(A))


def fix_phases(V: np.ndarray) -> np.ndarray:
    """Rotate every column so its largest-magnitude entry is real and nonnegative."""
    V = np.array(V, dtype=complex)
    idx = np.argmax(np.abs(V), axis=0)
    pivots = V[idx, np.arange(V.shape[1])]
    mags = np.abs(pivots)
    phases = np.where(mags > 0, pivots / np.where(mags > 0, mags, 1.0), 1.0)
    return V / phases


def eig_hermitian(H: np.ndarray) -> Spectrum:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise NonHermitianInput("matrix has non-finite entries")
    scale = max(1.0, fro(H))
    if fro(H - dagger(H)) >= 1e-10 * scale:
        raise NonHermitianInput(
            f"||H - H^dag||_F = {fro(H - dagger(H)):.3e} exceeds tolerance"
        )
    try:
        w, V = np.linalg.eigh(hermitian_part(H))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(w)[::-1]
    return Spectrum(w[order], fix_phases(V[:, order]))


def sqrt_psd(E: np.ndarray) -> np.ndarray:
    """Principal square root of a positive semidefinite matrix.

    Eigenvalues down to -1e-8 are treated as roundoff and clamped to zero.
    """
    spec = eig_hermitian(E)
    w = spec.eigenvalues
    if w.size and w.min() < -1e-8:
        raise NotPsd(f"minimum eigenvalue {w.min():.3e} < -1e-8")
    # eigenvalues at the roundoff scale are zeros; sqrt would inflate them to ~1e-8
    floor = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    root = np.sqrt(np.where(w > floor, w, 0.0))
    V = spec.eigenvectors
    return hermitian_part((V * root) @ dagger(V))


def _as_columns(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return vectors.astype(complex)
    cols = [np.asarray(v, dtype=complex).reshape(-1) for v in vectors]
    if not cols:
        raise DimensionMismatch("need at least one vector")
    dims = {c.size for c in cols}
    if len(dims) != 1:
        raise DimensionMismatch(f"vectors have differing dimensions {sorted(dims)}")
    return np.stack(cols, axis=1)


def span_projector(vectors, tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto the span of ``vectors``.

    ``vectors`` is either a list of 1-d arrays or a 2-d array whose columns are
    the vectors. Directions with singular value at or below ``tol`` times the
    largest singular value are dropped.
    """
    A = _as_columns(vectors)
    d = A.shape[0]
    if A.shape[1] == 0:
        return np.zeros((d, d), dtype=complex)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((d, d), dtype=complex)
    r = int(np.sum(s > tol * s[0]))
    Ur = U[:, :r]
    return hermitian_part(Ur @ dagger(Ur))


def is_projector(P: np.ndarray, tol: float = 1e-10) -> bool:
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return False
    return fro(P - dagger(P)) < tol and fro(P @ P - P) < tol


def is_unitary(U: np.ndarray, tol: float = 1e-10) -> bool:
    U = np.asarray(U)
    return fro(dagger(U) @ U - np.eye(U.shape[0])) <= tol


def expm_hermitian(G: np.ndarray, t: float) -> np.ndarray:
    """exp(-i t G) for Hermitian ``G`` through its eigendecomposition."""
    w, V = np.linalg.eigh(hermitian_part(G))
    return (V * np.exp(-1j * t * w)) @ dagger(V)
