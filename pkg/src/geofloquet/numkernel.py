"""Dense complex-matrix substrate.

Every routine here is a pure function on numpy arrays.  Operators are plain
``(dim, dim)`` complex arrays; the Hermitian/unitary "types" are enforced by
the ``check_*`` validators rather than by wrapper classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

__all__ = [
    "HERMITIAN_TOL",
    "UNITARY_TOL",
    "NotHermitianError",
    "NotUnitaryError",
    "SpectralDecomposition",
    "PinvResult",
    "check_hermitian",
    "check_unitary",
    "dagger",
    "eigh",
    "eigu",
    "expm_antihermitian",
    "principal_phase",
    "pinv",
    "pinv_diagnostic",
    "overlap_matrix",
    "column_overlaps",
]

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10


class NotHermitianError(ValueError):
    pass


class NotUnitaryError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues and orthonormal eigenvectors (as columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def phases(self) -> np.ndarray:
        """Arguments of the eigenvalues in (-pi, pi] (unitary case)."""
        return principal_phase(np.angle(self.eigenvalues))

    def rebuild(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def check_hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate Hermiticity in relative max-norm and return the symmetrized matrix."""
    m = _as_square(m)
    scale = np.abs(m).max() if m.size else 0.0
    err = np.abs(m - m.conj().T).max() if m.size else 0.0
    if err > tol * max(scale, np.finfo(float).tiny):
        raise NotHermitianError(
            f"matrix is not Hermitian: max|M - M^dag| = {err:.3e} (scale {scale:.3e})"
        )
    return 0.5 * (m + m.conj().T)


def check_unitary(u, tol: float = UNITARY_TOL) -> np.ndarray:
    u = _as_square(u)
    err = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
    if err > tol:
        raise NotUnitaryError(f"matrix is not unitary: max|U^dag U - 1| = {err:.3e}")
    return u


def principal_phase(phi):
    """Map angles onto the branch (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = np.mod(phi + np.pi, 2 * np.pi) - np.pi
    # mod puts exact odd multiples of pi at -pi
    return np.where(out <= -np.pi, out + 2 * np.pi, out)


def eigh(m, tol: float = HERMITIAN_TOL) -> SpectralDecomposition:
    """Hermitian eigendecomposition with ascending eigenvalues."""
    m = check_hermitian(m, tol)
    w, v = np.linalg.eigh(m)
    return SpectralDecomposition(w, v)


def eigu(u, tol: float = UNITARY_TOL) -> SpectralDecomposition:
    """Eigendecomposition of a unitary matrix.

    Uses the complex Schur form, which for a normal matrix is diagonal and comes
    with an orthonormal basis even inside (near-)degenerate eigenvalue clusters.
    Eigenvalues are renormalized onto the unit circle.
    """
    u = check_unitary(u, tol)
    t, z = sla.schur(u, output="complex")
    lam = np.diag(t).copy()
    lam /= np.abs(lam)
    return SpectralDecomposition(lam, z)


def expm_antihermitian(m, s: float = 1.0, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``exp(-i s M)`` for Hermitian ``M``."""
    if not np.isfinite(s):
        raise ValueError("time step must be finite")
    dec = eigh(m, tol)
    v = dec.eigenvectors
    return (v * np.exp(-1j * s * dec.eigenvalues)) @ v.conj().T


@dataclass(frozen=True)
class PinvResult:
    pinv: np.ndarray
    rank: int
    singular_values: np.ndarray
    # ratio of the smallest kept to the largest discarded singular value;
    # inf when nothing was discarded.  Values near 1 mean an ambiguous rank.
    gap_ratio: float


def pinv_diagnostic(m, rank_tol: float = 1e-10, max_rank: int | None = None) -> PinvResult:
    """Moore-Penrose pseudoinverse via SVD, with the rank decision exposed.

    Singular values below ``rank_tol * sigma_max`` are treated as zero.  An
    optional ``max_rank`` caps the retained rank when the null-space
    dimension is known a priori.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    m = np.asarray(m, dtype=complex)
    if m.size == 0:
        return PinvResult(m.T.copy(), 0, np.zeros(0), np.inf)
    uu, s, vh = np.linalg.svd(m, full_matrices=False)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return PinvResult(np.zeros(m.T.shape, dtype=complex), 0, s, np.inf)
    keep = s > rank_tol * smax
    rank = int(keep.sum())
    if max_rank is not None:
        rank = min(rank, max(int(max_rank), 0))
        keep = np.arange(s.size) < rank
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    p = (vh.conj().T * inv) @ uu.conj().T
    if rank < s.size:
        gap = (s[rank - 1] / s[rank] if s[rank] > 0 else np.inf) if rank > 0 else 0.0
    else:
        gap = np.inf
    return PinvResult(p, rank, s, float(gap))


def pinv(m, rank_tol: float = 1e-10) -> np.ndarray:
    return pinv_diagnostic(m, rank_tol).pinv


def overlap_matrix(a, b) -> np.ndarray:
    """Matrix of overlaps ``<a_i|b_j>`` between two column-stacked state sets."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"state dimension mismatch: {a.shape[0]} vs {b.shape[0]}"
        )
    return a.conj().T @ b


def column_overlaps(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Diagonal of ``overlap_matrix(a, b)`` without forming the full product."""
    return np.einsum("ij,ij->j", a.conj(), b)
