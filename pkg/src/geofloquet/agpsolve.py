"""Fourier-space construction of the Kato gauge potential by pseudoinversion.

Periodic operators are represented by harmonics ``O(t) = sum_l exp(i l w t) O_l``.
The superoperator

    L(X) = -i [H(t), X(t)] - d_t X(t)

acts on ``X`` truncated to ``|l| <= N_h``.  Its kernel is spanned by the
transported Floquet projectors ``P_n(t)``, and ``H`` itself satisfies
``L(H) = -d_t H``.  Hence ``A_+ = -L^+(d_t H)`` is the component of ``H``
orthogonal to the kernel, ``A_+ = H - sum_n xi_n P_n(t)`` as ``N_h -> inf``,
with ``xi_n`` the period-averaged Kato energies.  The Kato potential itself
is recovered by removing the diagonal of ``A_+`` in the eigenbasis of
``H - A_+`` (whose eigenvalues approximate ``xi_n``).

Vectorization is harmonic-major: the block for harmonic ``l`` starts at row
``(l + N_h) * dim**2`` and holds ``vec(X_l)`` in column-major order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .drives import DriveProtocol
from .numkernel import PinvResult, eigh, pinv_diagnostic

__all__ = [
    "MAX_ROWS",
    "FourierOperator",
    "build_L",
    "vectorize",
    "devectorize",
    "AGPSolution",
    "solve_kato_agp",
    "kato_agp_from_pinv",
    "diagonal_profile",
    "truncation_sweep",
    "HFEResult",
    "hfe_kato",
]

MAX_ROWS = 8192  # dense complex matrix of about 1 GiB


@dataclass(frozen=True, eq=False)
class FourierOperator:
    harmonics: Mapping[int, np.ndarray]
    omega: float

    @property
    def dim(self) -> int:
        return next(iter(self.harmonics.values())).shape[0]

    @property
    def max_harmonic(self) -> int:
        nz = [abs(l) for l, h in self.harmonics.items() if np.abs(h).max() > 0]
        return max(nz) if nz else 0

    def coefficient(self, l: int) -> np.ndarray:
        h = self.harmonics.get(l)
        return np.zeros((self.dim, self.dim), dtype=complex) if h is None else np.asarray(h, dtype=complex)

    def at(self, t: float) -> np.ndarray:
        return sum(np.exp(1j * l * self.omega * t) * np.asarray(h) for l, h in self.harmonics.items())

    def derivative(self) -> "FourierOperator":
        return FourierOperator({l: 1j * l * self.omega * np.asarray(h) for l, h in self.harmonics.items()},
                               self.omega)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max((np.abs(h).max() for h in self.harmonics.values()), default=0.0)
        return all(
            np.abs(self.coefficient(-l) - np.asarray(h).conj().T).max() <= tol * max(scale, 1e-300)
            for l, h in self.harmonics.items()
        )

    @classmethod
    def from_drive(cls, d: DriveProtocol, n_harmonics: int) -> "FourierOperator":
        return cls(d.fourier(n_harmonics), d.omega)


def vectorize(x: FourierOperator, n_h: int) -> np.ndarray:
    """Harmonic-major, column-major stacking of ``X_l`` for ``l = -N_h..N_h``."""
    return np.concatenate([x.coefficient(l).reshape(-1, order="F") for l in range(-n_h, n_h + 1)])


def devectorize(v: np.ndarray, dim: int, n_h: int, omega: float) -> FourierOperator:
    blocks = np.asarray(v).reshape(2 * n_h + 1, dim * dim)
    return FourierOperator(
        {l: blocks[l + n_h].reshape(dim, dim, order="F") for l in range(-n_h, n_h + 1)}, omega
    )


def build_L(h: FourierOperator, n_h: int) -> np.ndarray:
    """Dense matrix of ``X -> -i[H, X] - d_t X`` on harmonics ``|l| <= N_h``."""
    dim = h.dim
    nb = 2 * n_h + 1
    rows = nb * dim * dim
    if rows > MAX_ROWS:
        raise ValueError(f"superoperator with {rows} rows exceeds the dense limit {MAX_ROWS}")
    eye = np.eye(dim)
    out = np.zeros((rows, rows), dtype=complex)
    d2 = dim * dim
    comm = {}
    for m, hm in h.harmonics.items():
        hm = np.asarray(hm, dtype=complex)
        if np.abs(hm).max() == 0:
            continue
        # vec([H, X]) = (1 (x) H - H^T (x) 1) vec(X) for column-major vec
        comm[m] = -1j * (np.kron(eye, hm) - np.kron(hm.T, eye))
    for a, l in enumerate(range(-n_h, n_h + 1)):
        for m, cm in comm.items():
            lp = l - m
            if -n_h <= lp <= n_h:
                b = lp + n_h
                out[a * d2:(a + 1) * d2, b * d2:(b + 1) * d2] += cm
        out[a * d2:(a + 1) * d2, a * d2:(a + 1) * d2] -= 1j * l * h.omega * np.eye(d2)
    return out


@dataclass(frozen=True, eq=False)
class AGPSolution:
    a_plus: FourierOperator
    n_h: int
    rank: int
    gap_ratio: float
    residual: float
    normal_residual: float
    singular_values: np.ndarray


def _apply_extended(h: FourierOperator, x: FourierOperator, n_ext: int) -> np.ndarray:
    return build_L(h, n_ext) @ vectorize(x, n_ext)


def solve_kato_agp(h: FourierOperator, n_h: int | None = None, rank_tol: float = 1e-10,
                   kernel_dim: int | None = None) -> AGPSolution:
    """``A_+ = -L^+(d_t H)`` on ``N_h`` harmonics.

    ``n_h`` defaults to the number of drive harmonics plus four.  Truncation
    turns the exact kernel (one projector per Floquet level) into a cluster
    of small but finite singular values, so the retained rank is capped at
    ``rows - kernel_dim`` (default ``kernel_dim = dim``, valid for a
    nondegenerate quasienergy spectrum) in addition to the ``rank_tol``
    threshold.  ``gap_ratio`` reports how cleanly that kernel separates.  The
    residuals are measured with the untruncated action of ``L`` (harmonics
    up to ``N_h`` plus twice the drive bandwidth):
    ``residual = ||L(A_+) + d_t H||`` and
    ``normal_residual = ||L(L(A_+) + d_t H)||``.
    """
    nd = h.max_harmonic
    if n_h is None:
        n_h = nd + 4
    if n_h < 1:
        raise ValueError("N_h must be at least 1")
    lmat = build_L(h, n_h)
    dh = h.derivative()
    if kernel_dim is None:
        kernel_dim = h.dim
    diag: PinvResult = pinv_diagnostic(lmat, rank_tol, max_rank=lmat.shape[0] - kernel_dim)
    vec = -diag.pinv @ vectorize(dh, n_h)
    a = devectorize(vec, h.dim, n_h, h.omega)
    # enforce the Hermitian structure that the exact solution has
    a = FourierOperator(
        {l: 0.5 * (a.coefficient(l) + a.coefficient(-l).conj().T) for l in range(-n_h, n_h + 1)}, h.omega
    )
    n_ext = n_h + 2 * max(nd, 1)
    r = _apply_extended(h, a, n_ext) + vectorize(dh, n_ext)
    n_ext2 = n_ext + max(nd, 1)
    r_op = devectorize(r, h.dim, n_ext, h.omega)
    rr = build_L(h, n_ext2) @ vectorize(r_op, n_ext2)
    return AGPSolution(a, n_h, diag.rank, diag.gap_ratio, float(np.linalg.norm(r)),
                       float(np.linalg.norm(rr)), diag.singular_values)


def kato_agp_from_pinv(sol: AGPSolution, h: FourierOperator, t: float) -> np.ndarray:
    """Kato potential at ``t``: ``A_+`` with its diagonal removed in the eigenbasis of ``H - A_+``."""
    a = sol.a_plus.at(t)
    ht = h.at(t)
    v = eigh(0.5 * ((ht - a) + (ht - a).conj().T), tol=1e-6).eigenvectors
    d = np.real(np.einsum("in,ij,jn->n", v.conj(), a, v))
    out = a - (v * d) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def diagonal_profile(sol: AGPSolution, h: FourierOperator, ts) -> np.ndarray:
    """Diagonal of ``A_+(t)`` in the eigenbasis of ``H(t) - A_+(t)``, shape ``(len(ts), dim)``.

    For generic drives this equals ``E_K,n(t) - xi_n``: it averages to zero
    over a period but is not pointwise zero unless the Kato energies are
    constant in time.
    """
    rows = []
    for t in ts:
        a = sol.a_plus.at(t)
        ht = h.at(t)
        dec = eigh(0.5 * ((ht - a) + (ht - a).conj().T), tol=1e-6)
        v = dec.eigenvectors
        rows.append(np.real(np.einsum("in,ij,jn->n", v.conj(), a, v)))
    return np.array(rows)


def truncation_sweep(h: FourierOperator, n_values=(1, 2, 4, 8), oracle=None, ts=None,
                     rank_tol: float = 1e-10, kernel_dim: int | None = None) -> list[dict]:
    """Residuals (and optional distance to an oracle ``t -> A_K``) versus ``N_h``."""
    out = []
    if ts is None:
        ts = np.arange(32) * (2 * np.pi / h.omega) / 32
    for n in n_values:
        s = solve_kato_agp(h, n, rank_tol, kernel_dim)
        row = {"N_h": n, "residual": s.residual, "normal_residual": s.normal_residual,
               "rank": s.rank, "gap_ratio": s.gap_ratio}
        if oracle is not None:
            row["distance"] = max(
                float(np.abs(kato_agp_from_pinv(s, h, t) - oracle(t)).max()) for t in ts
            )
        out.append(row)
    return out


@dataclass(frozen=True)
class HFEResult:
    H_F0: np.ndarray
    states: np.ndarray
    xi_K0: np.ndarray
    gamma0: np.ndarray


def hfe_kato(d: DriveProtocol, order: int = 0) -> HFEResult:
    """Zeroth-order high-frequency estimate of the Kato objects.

    ``H_F^(0)`` is the period-averaged Hamiltonian; its eigenstates stand in
    for the Floquet states, and ``xi^(0)_m = T^-1 int <psi_m|H(t)|psi_m> dt``.
    Without micromotion at this order the Berry phases vanish.
    """
    if order != 0:
        raise NotImplementedError("only the zeroth-order procedure is available")
    hbar = d.average_hamiltonian()
    dec = eigh(0.5 * (hbar + hbar.conj().T))
    v = dec.eigenvectors
    xi = np.real(np.einsum("in,ij,jn->n", v.conj(), hbar, v))
    return HFEResult(hbar, v, xi, np.zeros_like(xi))
