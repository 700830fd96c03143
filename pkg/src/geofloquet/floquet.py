"""Stroboscopic (Floquet) side: phases, states, micromotion, H_F and A_F."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .drives import DriveProtocol
from .numkernel import eigh, eigu, principal_phase
from .propagator import DEFAULT_STEPS, converged_steps, propagate

__all__ = [
    "DEGENERACY_TOL",
    "UnfoldingGauge",
    "FloquetSolution",
    "solve_floquet",
    "phase_clusters",
    "fix_phases",
    "micromotion",
    "evolution",
    "floquet_states_at",
    "floquet_hamiltonian",
    "floquet_agp",
    "refold",
    "DriveFamilies",
    "classify_drive",
]

DEGENERACY_TOL = 1e-9
MICROMOTION_GRID = 256
# above this dimension micromotion is re-propagated on demand instead of stored
STORE_MAX_DIM = 64


@dataclass(frozen=True)
class UnfoldingGauge:
    """Integer shifts ``l_n`` mapping ``eps_n -> eps_n + l_n w``."""

    shifts: tuple[int, ...]

    def __post_init__(self):
        vals = tuple(self.shifts)
        for v in vals:
            if isinstance(v, bool) or int(v) != v:
                raise TypeError("unfolding shifts must be integers")
        object.__setattr__(self, "shifts", tuple(int(v) for v in vals))

    @classmethod
    def zero(cls, n: int) -> "UnfoldingGauge":
        return cls((0,) * n)

    def as_array(self) -> np.ndarray:
        return np.array(self.shifts, dtype=int)


@dataclass(frozen=True, eq=False)
class FloquetSolution:
    drive: DriveProtocol
    theta_F: np.ndarray  # principal branch (-pi, pi]
    states: np.ndarray  # columns |psi_n[t0]>
    monodromy: np.ndarray
    gauge_t0: float = 0.0
    unfolding: UnfoldingGauge | None = None
    steps: int | None = None  # midpoint steps per period (None for kicked)
    grid: np.ndarray | None = None
    evolution_samples: np.ndarray | None = None  # U(t0 + grid_j, t0)
    clusters: tuple[tuple[int, ...], ...] = ()
    unresolved_clusters: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        if self.unfolding is None:
            object.__setattr__(self, "unfolding", UnfoldingGauge.zero(self.theta_F.size))

    @property
    def period(self) -> float:
        return self.drive.period

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def unfolded_theta(self) -> np.ndarray:
        return self.theta_F + 2 * np.pi * self.unfolding.as_array()

    @property
    def quasienergies(self) -> np.ndarray:
        return self.unfolded_theta / self.period

    def stroboscopic(self) -> np.ndarray:
        """``sum_n exp(-i theta_n) |psi_n><psi_n|`` rebuilt from the solution."""
        v = self.states
        return (v * np.exp(-1j * self.unfolded_theta)) @ v.conj().T


def phase_clusters(theta: np.ndarray, tol: float = DEGENERACY_TOL) -> list[list[int]]:
    """Group indices whose phases coincide on the circle within ``tol``."""
    n = theta.size
    if n == 0:
        return []
    order = np.argsort(theta)
    groups = [[int(order[0])]]
    for a, b in zip(order[:-1], order[1:]):
        if theta[b] - theta[a] < tol:
            groups[-1].append(int(b))
        else:
            groups.append([int(b)])
    # wrap-around between +pi and -pi
    if len(groups) > 1 and (theta[order[0]] + 2 * np.pi - theta[order[-1]]) < tol:
        groups[0] = groups.pop() + groups[0]
    return groups


def fix_phases(v: np.ndarray) -> np.ndarray:
    """Make the largest-modulus component of each column real and positive."""
    idx = np.argmax(np.abs(v) > (np.abs(v).max(axis=0) * (1 - 1e-6)), axis=0)
    ph = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(ph) / ph)


def _split_cluster(v: np.ndarray, op: np.ndarray, tol: float):
    """Rotate cluster basis ``v`` to diagonalize Hermitian ``op`` projected on it.

    Returns the rotated basis and whether the projected spectrum is nondegenerate.
    """
    block = v.conj().T @ op @ v
    dec = eigh(0.5 * (block + block.conj().T), tol=1e-8)
    ok = bool(np.all(np.diff(dec.eigenvalues) > tol))
    return v @ dec.eigenvectors, ok


def solve_floquet(
    d: DriveProtocol,
    t0: float = 0.0,
    steps: int | None = None,
    grid_points: int = MICROMOTION_GRID,
    store: bool | None = None,
    symmetry: np.ndarray | None = None,
    degeneracy_tol: float = DEGENERACY_TOL,
    tol: float = 1e-9,
) -> FloquetSolution:
    """Diagonalize the monodromy ``U(t0 + T, t0)``.

    ``steps`` fixes the midpoint steps per period; ``None`` refines
    adaptively until the monodromy changes by less than ``tol``.  When
    ``store`` is true (default for ``dim <= 64``) ``U(t0 + t, t0)`` is kept on
    ``grid_points`` uniform times for micromotion queries.  Phases that are
    degenerate within ``degeneracy_tol`` are resolved by the drive's declared
    symmetry (or ``symmetry`` if given).
    """
    T = d.period
    if not d.is_kicked:
        if steps is None:
            steps = converged_steps(d, t0, tol)[0]
        # grid nodes must coincide with integrator nodes
        steps = int(np.ceil(steps / grid_points) * grid_points)
    if store is None:
        store = d.dim <= STORE_MAX_DIM
    grid = np.arange(grid_points + 1) * T / grid_points
    if store:
        samples = np.empty((grid_points + 1, d.dim, d.dim), dtype=complex)
        u = np.eye(d.dim, dtype=complex)
        samples[0] = u
        sub = None if steps is None else steps // grid_points
        for j in range(grid_points):
            u = propagate(d, t0 + grid[j], t0 + grid[j + 1], sub) @ u
            samples[j + 1] = u
        mono = u
    else:
        samples = None
        mono = propagate(d, t0, t0 + T, steps)

    dec = eigu(mono)
    theta = principal_phase(-np.angle(dec.eigenvalues))
    order = np.argsort(theta, kind="stable")
    theta, v = theta[order], dec.eigenvectors[:, order]

    sym = symmetry if symmetry is not None else d.symmetry
    clusters, unresolved = [], []
    for c in phase_clusters(theta, degeneracy_tol):
        if len(c) < 2:
            continue
        clusters.append(tuple(c))
        ok = False
        if sym is not None:
            v[:, c], ok = _split_cluster(v[:, c], sym, 1e-8)
        if not ok:
            unresolved.append(tuple(c))
        # a common phase for the cluster keeps e^{-i theta} exact
        theta[c] = theta[c[0]]
    v = fix_phases(v)
    return FloquetSolution(
        drive=d, theta_F=theta, states=v, monodromy=mono, gauge_t0=t0, steps=steps,
        grid=grid if store else None, evolution_samples=samples,
        clusters=tuple(clusters), unresolved_clusters=tuple(unresolved),
    )


def evolution(sol: FloquetSolution, t: float) -> np.ndarray:
    """``U(t0 + t, t0)`` for ``t`` in ``[0, T]``, re-propagated from the nearest stored node."""
    T = sol.period
    if not -1e-12 <= t <= T * (1 + 1e-12):
        raise ValueError("micromotion time must lie in [0, T]")
    d, t0 = sol.drive, sol.gauge_t0
    per = None if sol.steps is None else sol.steps / T
    if sol.evolution_samples is None:
        n = None if per is None else max(1, int(round(per * t)))
        return propagate(d, t0, t0 + t, n)
    g = sol.grid
    j = int(np.clip(np.searchsorted(g, t, side="right") - 1, 0, g.size - 1))
    if abs(g[j] - t) < 1e-14 * max(1.0, T):
        return sol.evolution_samples[j]
    n = None if per is None else max(1, int(np.ceil(per * (t - g[j]))))
    return propagate(d, t0 + g[j], t0 + t, n) @ sol.evolution_samples[j]


def micromotion(sol: FloquetSolution, t: float) -> np.ndarray:
    """``P(t) = U(t0 + t, t0) exp(+i t H_F)``."""
    v = sol.states
    rot = (v * np.exp(1j * t * sol.quasienergies)) @ v.conj().T
    return evolution(sol, t) @ rot


def floquet_states_at(sol: FloquetSolution, t: float) -> np.ndarray:
    """``|psi_n[t]> = P(t)|psi_n[0]>`` (periodic in t)."""
    return (evolution(sol, t) @ sol.states) * np.exp(1j * t * sol.quasienergies)


def floquet_hamiltonian(sol: FloquetSolution, t: float = 0.0) -> np.ndarray:
    """``H_F[t] = P(t) H_F P(t)^dag``; ``H_F[0]`` has the unfolded quasienergies."""
    v = floquet_states_at(sol, t) if t != 0.0 else sol.states
    h = (v * sol.quasienergies) @ v.conj().T
    return 0.5 * (h + h.conj().T)


def floquet_agp(sol: FloquetSolution, t: float) -> np.ndarray:
    """Floquet gauge potential ``A_F(t) = H(t) - H_F[t]``."""
    return sol.drive.hamiltonian(sol.gauge_t0 + t) - floquet_hamiltonian(sol, t)


def refold(sol: FloquetSolution, gauge: UnfoldingGauge) -> FloquetSolution:
    """Attach a new unfolding gauge; states and ``U(T)`` are unchanged."""
    if len(gauge.shifts) != sol.theta_F.size:
        raise ValueError("gauge length must match number of levels")
    return replace(sol, unfolding=gauge)


@dataclass(frozen=True)
class DriveFamilies:
    equilibrium: bool
    pure_micromotion: bool
    flat: bool
    pure_geometric: bool
    norms: dict


def classify_drive(d: DriveProtocol, sol: FloquetSolution, kato, tol: float = 1e-6,
                   samples: int = 64) -> DriveFamilies:
    """Flag the extremal drive families.

    ``kato`` is a :class:`geofloquet.kato.KatoResult` for the same drive and gauge.
    Norms are spectral norms maximized over ``samples`` uniform times.
    """
    from .kato import kato_agp_at

    ts = np.arange(samples) * d.period / samples
    a_f = max(np.linalg.norm(floquet_agp(sol, t), 2) for t in ts)
    h_f = float(np.linalg.norm(floquet_hamiltonian(sol), 2))
    a_k, h_k = 0.0, 0.0
    for t in ts:
        a = kato_agp_at(kato, t)
        a_k = max(a_k, np.linalg.norm(a, 2))
        h_k = max(h_k, np.linalg.norm(d.hamiltonian(sol.gauge_t0 + t) - a, 2))
    norms = {"A_F": float(a_f), "H_F": h_f, "A_K": float(a_k), "H_K": float(h_k)}
    return DriveFamilies(a_f < tol, h_f < tol, a_k < tol, h_k < tol, norms)
