"""Time-periodic drive protocols and the model zoo.

A :class:`DriveProtocol` is either *continuous* (a rule ``H(t)``, optionally
backed by an exact finite Fourier series) or *kicked* (an ordered list of
constant Hamiltonians, each held for a rational fraction of the period).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping

import numpy as np

from .numkernel import check_hermitian

__all__ = [
    "Segment",
    "DriveProtocol",
    "static_drive",
    "fourier_drive",
    "function_drive",
    "kicked_drive",
    "random_fourier_drive",
    "XYBlochParams",
    "XYClosedForms",
    "xy_bloch",
    "xy_closed_forms",
    "xy_kato_crossing_J",
    "xy_resonance_J",
    "KickedMFIParams",
    "kicked_mfi",
    "mfi_average_hamiltonian",
    "DTCParams",
    "dtc_chain",
    "dtc_operators",
    "sigma_z_diagonals",
    "AFTIHexParams",
    "AFTIHexFamily",
    "afti_hex",
    "AFTIRudnerParams",
    "afti_rudner",
    "MODEL_REGISTRY",
    "list_models",
    "build_model",
    "ResourceError",
    "PAULI",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
TAU = {k: v / 2 for k, v in PAULI.items() if k != "I"}


class ResourceError(ValueError):
    """Requested model size exceeds the configured dense-matrix limits."""


@dataclass(frozen=True)
class Segment:
    hamiltonian: np.ndarray
    fraction: Fraction

    def duration(self, period: float) -> float:
        return float(self.fraction) * period


@dataclass(frozen=True, eq=False)
class DriveProtocol:
    """A Hamiltonian with ``H(t + period) = H(t)``.

    Exactly one of ``func``/``harmonics`` (continuous) or ``segments`` (kicked)
    defines the time dependence.  ``symmetry`` optionally names a Hermitian
    operator commuting with the evolution; it is used to fix the basis inside
    degenerate Floquet eigenspaces.
    """

    dim: int
    period: float
    name: str = "drive"
    func: Callable[[float], np.ndarray] | None = None
    harmonics: Mapping[int, np.ndarray] | None = None
    segments: tuple[Segment, ...] | None = None
    batch: Callable[[np.ndarray], np.ndarray] | None = None
    symmetry: np.ndarray | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.period <= 0 or not np.isfinite(self.period):
            raise ValueError("period must be positive and finite")
        if self.segments is not None:
            if self.func is not None or self.harmonics is not None:
                raise ValueError("a kicked drive cannot also define H(t)")
            if sum((s.fraction for s in self.segments), Fraction(0)) != 1:
                raise ValueError("segment fractions must sum to exactly one period")
            if any(s.fraction <= 0 for s in self.segments):
                raise ValueError("segment durations must be positive")
        elif self.func is None and self.harmonics is None:
            raise ValueError("drive needs func, harmonics or segments")

    @property
    def omega(self) -> float:
        return 2 * np.pi / self.period

    @property
    def is_kicked(self) -> bool:
        return self.segments is not None

    def segment_times(self) -> np.ndarray:
        """Boundaries of kicked segments within ``[0, period]``."""
        if not self.is_kicked:
            return np.array([0.0, self.period])
        acc = [Fraction(0)]
        for s in self.segments:
            acc.append(acc[-1] + s.fraction)
        return np.array([float(a) * self.period for a in acc])

    def segment_index(self, t: float) -> int:
        """Index of the (right-continuous) segment active at time ``t``."""
        tau = np.mod(t, self.period)
        bounds = self.segment_times()
        j = int(np.searchsorted(bounds, tau, side="right")) - 1
        return min(max(j, 0), len(self.segments) - 1)

    def hamiltonian(self, t: float) -> np.ndarray:
        if self.is_kicked:
            return self.segments[self.segment_index(t)].hamiltonian
        if self.func is not None:
            return self.func(t)
        w = self.omega
        return sum(np.exp(1j * l * w * t) * h for l, h in self.harmonics.items())

    def hamiltonians(self, ts) -> np.ndarray:
        """Stack of ``H(t)`` for an array of times."""
        ts = np.asarray(ts, dtype=float)
        if self.batch is not None:
            out = np.asarray(self.batch(ts), dtype=complex)
        elif self.harmonics is not None and self.func is None:
            out = np.zeros((ts.size, self.dim, self.dim), dtype=complex)
            for l, h in self.harmonics.items():
                out += np.exp(1j * l * self.omega * ts)[:, None, None] * h
        else:
            out = np.stack([self.hamiltonian(t) for t in ts]) if ts.size else np.zeros(
                (0, self.dim, self.dim), dtype=complex
            )
        return out

    def average_hamiltonian(self, quad_points: int = 512) -> np.ndarray:
        """Period average ``T^-1 int_0^T H(t) dt``."""
        if self.is_kicked:
            return sum(float(s.fraction) * s.hamiltonian for s in self.segments)
        if self.harmonics is not None and self.func is None:
            return np.array(self.harmonics.get(0, np.zeros((self.dim, self.dim))), dtype=complex)
        # periodic trapezoid = spectrally accurate for smooth drives
        ts = np.arange(quad_points) * self.period / quad_points
        return self.hamiltonians(ts).mean(axis=0)

    def fourier(self, n_harmonics: int, quad_points: int | None = None) -> dict[int, np.ndarray]:
        """Fourier coefficients ``H_l`` with ``H(t) = sum_l exp(i l w t) H_l``."""
        if self.harmonics is not None and self.func is None:
            return {
                l: np.array(self.harmonics.get(l, np.zeros((self.dim, self.dim))), dtype=complex)
                for l in range(-n_harmonics, n_harmonics + 1)
            }
        if self.is_kicked:
            raise ValueError("kicked drives have no convergent Fourier series")
        m = quad_points or max(8 * n_harmonics + 64, 256)
        ts = np.arange(m) * self.period / m
        hs = self.hamiltonians(ts)
        out = {}
        for l in range(-n_harmonics, n_harmonics + 1):
            out[l] = np.tensordot(np.exp(-1j * l * self.omega * ts), hs, axes=1) / m
        return out

    def with_period(self, period: float) -> "DriveProtocol":
        """Same kicked segments (as fractions) rescaled to a new period."""
        if not self.is_kicked:
            raise ValueError("only kicked drives can be rescaled generically")
        return DriveProtocol(
            self.dim, period, self.name, segments=self.segments,
            symmetry=self.symmetry, params={**self.params, "T": period},
        )


# ---------------------------------------------------------------------------
# generic constructors


def static_drive(h, period: float = 1.0, name: str = "static") -> DriveProtocol:
    h = check_hermitian(h)
    return DriveProtocol(h.shape[0], period, name, harmonics={0: h})


def fourier_drive(harmonics: Mapping[int, np.ndarray], omega: float, name: str = "fourier") -> DriveProtocol:
    harmonics = {int(l): np.asarray(h, dtype=complex) for l, h in harmonics.items()}
    dim = next(iter(harmonics.values())).shape[0]
    for l, h in harmonics.items():
        partner = harmonics.get(-l)
        if partner is None or np.abs(partner - h.conj().T).max() > 1e-12 * max(1.0, np.abs(h).max()):
            raise ValueError(f"harmonic {l} violates H_(-l) = H_l^dag")
    return DriveProtocol(dim, 2 * np.pi / omega, name, harmonics=harmonics)


def function_drive(func, period: float, dim: int, name: str = "function", batch=None) -> DriveProtocol:
    return DriveProtocol(dim, period, name, func=func, batch=batch)


def kicked_drive(segments, period: float, name: str = "kicked", symmetry=None, params=None) -> DriveProtocol:
    """``segments`` is an iterable of ``(H, fraction)`` in time order."""
    segs = tuple(Segment(check_hermitian(h), Fraction(f)) for h, f in segments)
    return DriveProtocol(
        segs[0].hamiltonian.shape[0], period, name, segments=segs,
        symmetry=symmetry, params=dict(params or {}),
    )


def random_fourier_drive(dim: int, n_harmonics: int, omega: float, seed: int = 0,
                         scale: float = 1.0, decay: float = 0.5) -> DriveProtocol:
    """Random Hermitian drive with harmonics ``|l| <= n_harmonics``."""
    rng = np.random.default_rng(seed)

    def cplx():
        return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))

    h0 = cplx()
    harm = {0: scale * (h0 + h0.conj().T) / 2}
    for l in range(1, n_harmonics + 1):
        m = scale * decay**l * cplx() / 2
        harm[l] = m
        harm[-l] = m.conj().T
    d = fourier_drive(harm, omega, name=f"random{dim}")
    return DriveProtocol(d.dim, d.period, d.name, harmonics=d.harmonics,
                         params={"dim": dim, "n_harmonics": n_harmonics, "omega": omega,
                                 "seed": seed, "scale": scale})


# ---------------------------------------------------------------------------
# XY chain, single momentum block


@dataclass(frozen=True)
class XYBlochParams:
    g: float = 1.0
    J: float = 0.5
    A: float = 2.5
    omega: float = 10.0
    k: float = np.pi / 16

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")

    @property
    def delta_k(self) -> float:
        return self.g + self.J * np.cos(self.k)

    @property
    def a_k(self) -> float:
        return self.A * np.sin(self.k)


def xy_bloch(p: XYBlochParams) -> DriveProtocol:
    """``h(k,t) = D_k tau^z + A_k [cos(wt) tau^x + sin(wt) tau^y]`` as exact harmonics."""
    tz, tx, ty = TAU["z"], TAU["x"], TAU["y"]
    h1 = p.a_k * (tx - 1j * ty) / 2
    harm = {0: p.delta_k * tz, 1: h1, -1: h1.conj().T}
    return DriveProtocol(2, 2 * np.pi / p.omega, "xy", harmonics=harm, params=vars_of(p))


def vars_of(p) -> dict:
    return {k: getattr(p, k) for k in p.__dataclass_fields__}


@dataclass(frozen=True)
class XYClosedForms:
    h_F: np.ndarray
    a_F: np.ndarray
    h_K: np.ndarray
    a_K: np.ndarray
    eps: float
    eps_K_sq: float

    @property
    def quasienergies(self) -> np.ndarray:
        """Floquet quasienergies ``-/+ (eps - w)/2`` (ascending order not implied)."""
        return np.array([-0.5, 0.5]) * (self.eps - self._omega)

    @property
    def kato_energies(self) -> np.ndarray:
        return np.array([-0.5, 0.5]) * self.eps_K_sq / self.eps

    _omega: float = 0.0


def xy_closed_forms(p: XYBlochParams, t: float) -> XYClosedForms:
    """Printed closed forms for the Floquet and Kato decompositions of one k-block."""
    w = p.omega
    dk, ak = p.delta_k, p.a_k
    eps = float(np.hypot(dk - w, ak))
    if eps == 0.0:
        raise ValueError(
            "rotating-frame Hamiltonian is exactly degenerate (D_k = w and A_k = 0); "
            "closed forms are undefined"
        )
    eps_k_sq = (dk - w) * dk + ak**2
    tz, tx, ty = TAU["z"], TAU["x"], TAU["y"]
    rot = np.cos(w * t) * tx + np.sin(w * t) * ty
    unit = (dk - w) / eps * tz + ak / eps * rot
    h_f = (eps - w) * unit
    a_f = w * ((1 + (dk - w) / eps) * tz + ak / eps * rot)
    h_k = eps_k_sq / eps * unit
    a_k = ak * w / eps * (ak / eps * tz - (dk - w) / eps * rot)
    return XYClosedForms(h_f, a_f, h_k, a_k, eps, eps_k_sq, _omega=w)


def xy_resonance_J(p: XYBlochParams) -> float:
    """Coupling where ``D_k = w`` at fixed ``k``."""
    return (p.omega - p.g) / np.cos(p.k)


def xy_kato_crossing_J(p: XYBlochParams) -> float:
    """Coupling where ``eps_K^2 = (D_k - w) D_k + A_k^2`` vanishes (upper root)."""
    w, ak = p.omega, p.a_k
    disc = w**2 - 4 * ak**2
    if disc < 0:
        raise ValueError("no real Kato crossing: A_k > w/2")
    dk = 0.5 * (w + np.sqrt(disc))
    return (dk - p.g) / np.cos(p.k)


# ---------------------------------------------------------------------------
# spin chains


def _bits(L: int) -> np.ndarray:
    """(2^L, L) array of spin values +-1; site 0 is the most significant qubit."""
    idx = np.arange(2**L)
    b = (idx[:, None] >> (L - 1 - np.arange(L))[None, :]) & 1
    return 1 - 2 * b  # 0 -> up (+1), 1 -> down (-1)


def sigma_z_diagonals(L: int) -> list[np.ndarray]:
    """Diagonals of ``sigma^z_i`` for ``i = 0..L-1`` in the computational basis."""
    return [c.astype(float) for c in _bits(L).T]


def _zz_field_diagonal(L: int, couplings, fields, periodic: bool) -> np.ndarray:
    s = _bits(L).astype(float)
    diag = s @ np.asarray(fields, dtype=float)
    nb = L if periodic else L - 1
    for n in range(nb):
        diag += couplings[n] * s[:, n] * s[:, (n + 1) % L]
    return diag


def _sum_sigma_x(L: int) -> np.ndarray:
    """Dense ``sum_n sigma^x_n`` built from bit flips."""
    n = 2**L
    m = np.zeros((n, n))
    idx = np.arange(n)
    for site in range(L):
        m[idx ^ (1 << (L - 1 - site)), idx] += 1.0
    return m


def _site_op(op: np.ndarray, site: int, L: int) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for n in range(L):
        out = np.kron(out, op if n == site else PAULI["I"])
    return out


def _zero_momentum_basis(L: int) -> np.ndarray:
    """Isometry onto the translation-invariant (k = 0) subspace of L spins."""
    n = 2**L
    mask = n - 1
    seen = np.zeros(n, dtype=bool)
    cols = []
    for s in range(n):
        if seen[s]:
            continue
        orbit = set()
        x = s
        for _ in range(L):
            orbit.add(x)
            x = ((x << 1) | (x >> (L - 1))) & mask
        orbit = sorted(orbit)
        seen[orbit] = True
        cols.append(orbit)
    v = np.zeros((n, len(cols)))
    for j, orbit in enumerate(cols):
        v[orbit, j] = 1.0 / np.sqrt(len(orbit))
    return v


DENSE_FULL_SPACE_MAX_L = 12


@dataclass(frozen=True)
class KickedMFIParams:
    L: int = 8
    J: float = 1.0
    g: float = 1.0
    h: float = 1.0
    T: float = 0.5
    sector: str | None = None  # None (full space) or "k0"
    max_L: int = 14

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("kicked MFI needs L >= 2")


def _mfi_operators(p: KickedMFIParams):
    if p.L > p.max_L:
        raise ResourceError(f"L={p.L} exceeds configured maximum {p.max_L}")
    if p.sector is None and p.L > DENSE_FULL_SPACE_MAX_L:
        raise ResourceError(
            f"full-space dense matrices for L={p.L} are out of budget; use sector='k0'"
        )
    diag1 = -_zz_field_diagonal(p.L, [p.J / 4] * p.L, [p.h / 2] * p.L, periodic=True)
    h2 = -p.g / 2 * _sum_sigma_x(p.L)
    if p.sector is None:
        return np.diag(diag1).astype(complex), h2.astype(complex)
    if p.sector != "k0":
        raise ValueError(f"unknown symmetry sector {p.sector!r}")
    v = _zero_momentum_basis(p.L)
    h1 = (v.T * diag1) @ v
    return h1.astype(complex), (v.T @ h2 @ v).astype(complex)


def kicked_mfi(p: KickedMFIParams) -> DriveProtocol:
    """``U_F = U_1 U_2 U_1`` with ``U_m = exp(-i m T H_m / 4)``.

    Segments in time order: ``H_1`` for T/4, ``H_2`` for T/2, ``H_1`` for T/4.
    """
    h1, h2 = _mfi_operators(p)
    segs = [(h1, Fraction(1, 4)), (h2, Fraction(1, 2)), (h1, Fraction(1, 4))]
    return kicked_drive(segs, p.T, name="kicked_mfi", params=vars_of(p))


def mfi_average_hamiltonian(p: KickedMFIParams) -> np.ndarray:
    """Zeroth-order high-frequency Hamiltonian ``(H_1 + H_2) / 2``."""
    h1, h2 = _mfi_operators(p)
    return 0.5 * (h1 + h2)


@dataclass(frozen=True)
class DTCParams:
    L: int = 8
    J: float = 1.0
    theta_x: float = np.pi
    T: float = 0.05
    seed: int = 0
    disorder: float = 0.5
    kick_fraction: Fraction = Fraction(1, 2)
    couplings: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.couplings is None:
            rng = np.random.default_rng(self.seed)
            eta = rng.uniform(-self.disorder, self.disorder, size=self.L - 1)
            object.__setattr__(self, "couplings", tuple(float(self.J * (1 + e)) for e in eta))
        if len(self.couplings) != self.L - 1:
            raise ValueError("open chain needs L-1 couplings")


def dtc_operators(p: DTCParams):
    """``(H_int, H_x, parity)`` for the open disordered Ising chain."""
    if p.L > DENSE_FULL_SPACE_MAX_L:
        raise ResourceError(f"L={p.L} too large for dense DTC matrices")
    diag = _zz_field_diagonal(p.L, p.couplings, np.zeros(p.L), periodic=False)
    h_int = np.diag(diag).astype(complex)
    h_x = 0.5 * _sum_sigma_x(p.L).astype(complex)
    # prod_n sigma^x_n flips every bit
    n = 2**p.L
    parity = np.zeros((n, n), dtype=complex)
    parity[np.arange(n) ^ (n - 1), np.arange(n)] = 1.0
    return h_int, h_x, parity


def dtc_chain(p: DTCParams) -> DriveProtocol:
    """``U_F = exp(-i T H_int) exp(-i theta_x H_x)``: kick first, then Ising evolution.

    The kick is realized as ``H_x * theta_x / (f T)`` held for ``f T`` and the
    interaction as ``H_int / (1 - f)`` for ``(1 - f) T``.  Floquet phases,
    Kato averages and Berry phases do not depend on ``f``.
    """
    h_int, h_x, parity = dtc_operators(p)
    f = Fraction(p.kick_fraction)
    if not 0 < f < 1:
        raise ValueError("kick fraction must lie in (0, 1)")
    segs = [
        (h_x * (p.theta_x / (float(f) * p.T)), f),
        (h_int / float(1 - f), 1 - f),
    ]
    params = vars_of(p)
    params["kick_fraction"] = str(f)
    return kicked_drive(segs, p.T, name="dtc", symmetry=parity, params=params)


# ---------------------------------------------------------------------------
# anomalous Floquet topological insulators on cylinders


@dataclass(frozen=True)
class AFTIHexParams:
    Lx: int = 100
    Ly: int = 20
    J: float = 1.0
    F: float = 2.0
    omega: float = 8.7

    def __post_init__(self):
        if self.Lx < 2 or self.Ly < 2:
            raise ValueError("cylinder needs Lx, Ly >= 2")


@dataclass(frozen=True)
class AFTIHexFamily:
    """Hexagonal-lattice drive resolved in ``k_x`` (periodic x, open y)."""

    params: AFTIHexParams

    @property
    def period(self) -> float:
        return 2 * np.pi / self.params.omega

    def kx_values(self) -> np.ndarray:
        lx = self.params.Lx
        m = np.arange(-(lx // 2) + 1, lx // 2 + 1) if lx % 2 == 0 else np.arange(-(lx // 2), lx // 2 + 1)
        return 2 * np.pi * m / lx

    def hoppings(self, ts) -> np.ndarray:
        """``J_n(t) = J exp[F cos(w t + phi_n)]`` for n = 1, 2, 3, shape (3, nt)."""
        p = self.params
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        phi = np.arange(3)[:, None] * 2 * np.pi / 3
        return p.J * np.exp(p.F * np.cos(p.omega * ts[None, :] + phi))

    def _batch(self, kx: float):
        ly = self.params.Ly
        dim = 2 * ly
        a_idx = 2 * np.arange(ly)
        b_idx = a_idx + 1
        phase = np.exp(1j * kx)

        def build(ts):
            jn = self.hoppings(ts)
            out = np.zeros((jn.shape[1], dim, dim), dtype=complex)
            # B(x,y) <- A(x,y): J3 ; B(x,y) <- A(x+1,y): J2 e^{i kx}
            out[:, b_idx, a_idx] = (jn[2] + jn[1] * phase)[:, None]
            # B(x,y) <- A(x,y-1): J1, open in y
            out[:, b_idx[1:], a_idx[:-1]] = jn[0][:, None]
            return out + np.conj(np.swapaxes(out, 1, 2))

        return build

    def at(self, kx: float) -> DriveProtocol:
        build = self._batch(kx)
        return DriveProtocol(
            2 * self.params.Ly, self.period, "afti_hex",
            func=lambda t: build(np.array([t]))[0], batch=build,
            params={**vars_of(self.params), "kx": float(kx)},
        )

    def edge_weight(self, states: np.ndarray, rows: int = 2) -> np.ndarray:
        """Weight of each column state on the ``rows`` outermost y-rows (both edges)."""
        ly = self.params.Ly
        mask = np.zeros(2 * ly, dtype=bool)
        mask[: 2 * rows] = True
        mask[-2 * rows:] = True
        return (np.abs(states[mask]) ** 2).sum(axis=0)

    def edge_side(self, states: np.ndarray, rows: int = 2) -> np.ndarray:
        """+1 for states localized on the top (large y) edge, -1 for bottom."""
        w = np.abs(states) ** 2
        bottom = w[: 2 * rows].sum(axis=0)
        top = w[-2 * rows:].sum(axis=0)
        return np.where(top > bottom, 1, -1)


def afti_hex(p: AFTIHexParams) -> AFTIHexFamily:
    return AFTIHexFamily(p)


@dataclass(frozen=True)
class AFTIRudnerParams:
    mu: float = 1.0
    J: float = 1.5
    b: float = 1.5
    a: float = 4.0
    Delta0: float = 1.0
    omega: float = 1.0 / 0.07
    Ly: int = 20

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")


def afti_rudner(p: AFTIRudnerParams, kx: float) -> DriveProtocol:
    """Bipartite-lattice Bloch model ``d(k,t).sigma`` on a cylinder open in y."""
    ly = p.Ly
    sx, sy, sz = PAULI["x"], PAULI["y"], PAULI["z"]
    up = np.diag(np.ones(ly - 1), 1)  # <y| up |y+1> = 1  <->  e^{i k_y}
    cos_y = (up + up.T) / 2
    sin_y = (up - up.T) / 2j
    eye = np.eye(ly)
    static = (
        np.kron(eye, p.a * np.sin(kx) * sx)
        + np.kron(sin_y, p.a * sy)
        + np.kron(eye, (p.mu - p.J - 4 * p.b + 2 * p.b * np.cos(kx)) * sz)
        + np.kron(cos_y, (2 * p.b + p.J * np.cos(kx)) * sz)
    )
    drive = np.kron(eye, sz) * (p.Delta0 / 2)
    harm = {0: static.astype(complex), 1: drive.astype(complex), -1: drive.astype(complex)}
    return DriveProtocol(
        2 * ly, 2 * np.pi / p.omega, "afti_rudner", harmonics=harm,
        params={**vars_of(p), "kx": float(kx)},
    )


# ---------------------------------------------------------------------------
# registry


MODEL_REGISTRY: dict[str, tuple[type, str]] = {
    "xy": (XYBlochParams, "circularly driven XY chain, single k-block (2x2)"),
    "kicked_mfi": (KickedMFIParams, "kicked mixed-field Ising chain, periodic boundary"),
    "dtc": (DTCParams, "disordered kicked Ising chain (discrete time crystal), open boundary"),
    "afti_hex": (AFTIHexParams, "hexagonal-lattice AFTI on a cylinder, resolved in k_x"),
    "afti_rudner": (AFTIRudnerParams, "bipartite-lattice AFTI on a cylinder, resolved in k_x"),
}


def list_models() -> dict[str, dict[str, Any]]:
    out = {}
    for name, (cls, doc) in MODEL_REGISTRY.items():
        defaults = {}
        for f, fd in cls.__dataclass_fields__.items():
            v = fd.default
            defaults[f] = str(v) if isinstance(v, Fraction) else v
        out[name] = {"description": doc, "parameters": defaults}
    return out


def build_model(name: str, params: Mapping[str, Any]):
    """Instantiate a registered model.

    Returns a :class:`DriveProtocol`, except for ``afti_hex`` (a k_x family)
    and ``afti_rudner`` (a callable of ``kx``).
    """
    if name not in MODEL_REGISTRY:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}")
    cls = MODEL_REGISTRY[name][0]
    unknown = set(params) - set(cls.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    kwargs = dict(params)
    if "kick_fraction" in kwargs:
        kwargs["kick_fraction"] = Fraction(kwargs["kick_fraction"])
    if "couplings" in kwargs and kwargs["couplings"] is not None:
        kwargs["couplings"] = tuple(kwargs["couplings"])
    p = cls(**kwargs)
    if name == "xy":
        return xy_bloch(p)
    if name == "kicked_mfi":
        return kicked_mfi(p)
    if name == "dtc":
        return dtc_chain(p)
    if name == "afti_hex":
        return afti_hex(p)
    return lambda kx: afti_rudner(p, kx)
