"""Kato decomposition ``H(t) = H_K(t) + A_K(t)`` of periodic drives.

The engine transports the Floquet states ``|psi_n[t0]>`` with ``U(t, t0)``
across one period, piece by piece.  On every piece the Hamiltonian is
constant, so ``<psi|H|psi>`` is conserved there and the Kato energy integral
is exact for the propagated dynamics.  Berry phases come from a discretized
Bargmann (parallel-transport) product, extrapolated in the piece width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drives import DriveProtocol
from .floquet import DEGENERACY_TOL, FloquetSolution, UnfoldingGauge, fix_phases
from .numkernel import column_overlaps, eigh, principal_phase
from .propagator import SCAN_MAX_DIM, prefix_products
from .propagator import pieces as _pieces

__all__ = [
    "GridRefinementError",
    "DegeneracyError",
    "KatoResult",
    "solve_kato",
    "kato_energies",
    "kato_average",
    "berry_phases",
    "kato_agp",
    "kato_agp_at",
    "kato_hamiltonian",
    "kato_hamiltonian_at",
    "wilson_line",
    "kato_operator",
    "reconstruct_monodromy",
    "gamma_in_gauge",
    "GaugeShiftResult",
    "gauge_shift_evolution",
]

MIN_OVERLAP = 0.5
STORE_MAX_DIM = 64
KICKED_SUBSTEPS = 64


class GridRefinementError(RuntimeError):
    """Consecutive grid states are too far apart for a reliable transport step."""

    def __init__(self, t: float, overlap: float):
        super().__init__(
            f"overlap {overlap:.3f} < {MIN_OVERLAP} at t={t:.6g}; refine the time grid"
        )
        self.t = t
        self.overlap = overlap


class DegeneracyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class KatoResult:
    """Kato objects of one drive at one Floquet gauge.

    ``E_K`` has shape ``(grid + 1, dim)`` with ``E_K[j, n]`` sampled at
    ``times[j]`` (right-continuous for kicked drives).  ``xi_K`` is the exact
    period average ``T^-1 int E_K``.  ``gamma`` is reported on the principal
    branch for the zero unfolding gauge and shifted by ``2 pi l_n`` otherwise.
    """

    floquet: FloquetSolution
    states0: np.ndarray  # Floquet/Kato states at the gauge time
    theta_F: np.ndarray
    times: np.ndarray
    E_K: np.ndarray
    cumulative: np.ndarray  # int_0^{t_j} E_K
    xi_K: np.ndarray
    gamma: np.ndarray
    gamma_raw: np.ndarray  # Bargmann estimate before branch selection
    dynamic_integral_discrete: np.ndarray
    grid_states: np.ndarray | None
    segment_energies: np.ndarray | None = None  # kicked: (n_segments, dim)
    unresolved: tuple = ()

    @property
    def period(self) -> float:
        return self.floquet.period

    @property
    def dim(self) -> int:
        return self.states0.shape[0]

    @property
    def drive(self) -> DriveProtocol:
        return self.floquet.drive

    @property
    def gauge_t0(self) -> float:
        return self.floquet.gauge_t0

    @property
    def unfolding(self) -> UnfoldingGauge:
        return self.floquet.unfolding

    @property
    def wilson(self) -> np.ndarray:
        return wilson_line(self)

    @property
    def consistency(self) -> np.ndarray:
        """``gamma + T xi_K - theta_F`` wrapped to (-pi, pi]; zero when consistent."""
        return principal_phase(self.gamma + self.period * self.xi_K - self.theta_F)

    def xi_running(self, t: float) -> np.ndarray:
        """Running average ``t^-1 int_0^t E_K ds`` (``E_K(0)`` at ``t = 0``)."""
        if t <= 0:
            return self.E_K[0].copy()
        c = np.array([np.interp(t, self.times, self.cumulative[:, n]) for n in range(self.dim)])
        return c / t

    def states_at(self, j: int) -> np.ndarray:
        if self.grid_states is None:
            raise ValueError("grid states were not stored (dimension above storage limit)")
        return self.grid_states[j]


def _kicked_edges(d: DriveProtocol, t0: float, grid: np.ndarray, substeps: int) -> np.ndarray:
    edges, _ = _pieces(d, t0, t0 + d.period, substeps=substeps)
    e = np.unique(np.concatenate([edges, t0 + grid]))
    keep = np.concatenate([[True], np.diff(e) > 1e-13 * d.period])
    e = e[keep]
    e[-1] = t0 + d.period
    return e


def _schedule(sol: FloquetSolution, grid_points: int, steps: int | None, substeps: int):
    d, t0, T = sol.drive, sol.gauge_t0, sol.period
    grid = np.arange(grid_points + 1) * T / grid_points
    if d.is_kicked:
        edges = _kicked_edges(d, t0, grid, substeps)
    else:
        n = steps or sol.steps or 2048
        n = int(np.ceil(n / grid_points) * grid_points)
        edges = t0 + np.arange(n + 1) * T / n
        edges[-1] = t0 + T
    # node j of the output grid sits at edge index node_idx[j]
    node_idx = np.searchsorted(edges, t0 + grid - 1e-12 * T)
    return grid, edges, node_idx


def _iter_pieces(d: DriveProtocol, edges: np.ndarray, chunk: int = 256):
    """Yield ``(k, key, H, w, v)`` for each piece.

    ``(w, v)`` is the eigendecomposition of the piece Hamiltonian and ``key``
    identifies it: consecutive pieces with equal keys share one Hamiltonian.
    """
    mids = 0.5 * (edges[1:] + edges[:-1])
    if d.is_kicked:
        cache = {}
        for k, tm in enumerate(mids):
            s = d.segment_index(tm)
            if s not in cache:
                h = d.segments[s].hamiltonian
                cache[s] = (h,) + tuple(np.linalg.eigh(h))
            yield (k, ("seg", s)) + cache[s]
        return
    for c in range(0, mids.size, chunk):
        hs = d.hamiltonians(mids[c:c + chunk])
        if not np.all(np.isfinite(hs)):
            raise ValueError("drive produced a non-finite Hamiltonian sample")
        hs = 0.5 * (hs + np.conj(np.swapaxes(hs, 1, 2)))
        ws, vs = np.linalg.eigh(hs)
        for j in range(hs.shape[0]):
            yield c + j, ("piece", c + j), hs[j], ws[j], vs[j]


def _expect(h: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("ij,ij->j", psi.conj(), h @ psi))


class _Transport:
    """State set kept in the eigenbasis of the current piece Hamiltonian.

    While consecutive pieces share a Hamiltonian the evolution, ``<H>`` and
    the Bargmann overlaps are all diagonal operations in that basis.
    """

    def __init__(self, psi: np.ndarray):
        self._psi = psi
        self._phi = None
        self._v = None
        self.key = None

    def enter(self, key, v):
        if key != self.key:
            self._psi = self.psi
            self._phi = v.conj().T @ self._psi
            self._v = v
            self.key = key

    @property
    def psi(self) -> np.ndarray:
        if self._phi is not None:
            self._psi = self._v @ self._phi
        return self._psi

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self._phi) ** 2

    @property
    def phi(self) -> np.ndarray:
        return self._phi

    def advance(self, w: np.ndarray, tau: float):
        self._phi = self._phi * np.exp(-1j * w * tau)[:, None]


def _cluster_kato_form(sol: FloquetSolution, edges: np.ndarray, clusters) -> dict:
    """Period-averaged ``<psi_a|H|psi_b>`` blocks for each degenerate cluster."""
    d = sol.drive
    cols = sorted({i for c in clusters for i in c})
    tr = _Transport(sol.states[:, cols].copy())
    m = np.zeros((len(cols), len(cols)), dtype=complex)
    dts = np.diff(edges)
    for k, key, h, w, v in _iter_pieces(d, edges):
        tr.enter(key, v)
        # <psi_a|H|psi_b> is conserved while H is constant
        phi = tr.phi
        m += dts[k] * (phi.conj().T @ (w[:, None] * phi))
        tr.advance(w, dts[k])
    pos = {c: i for i, c in enumerate(cols)}
    return {c: m[np.ix_([pos[i] for i in c], [pos[i] for i in c])] / sol.period for c in clusters}


def _check_links(o: np.ndarray, t: np.ndarray):
    mags = np.abs(o)
    if mags.size and mags.min() < MIN_OVERLAP:
        k = int(np.unravel_index(np.argmin(mags), mags.shape)[0])
        raise GridRefinementError(float(t[k]), float(mags.min()))


def _scan_kicked(d, edges, node_idx, states0, store):
    """Piecewise transport reusing the eigenbasis of each segment Hamiltonian."""
    dim, n = states0.shape
    n_nodes = node_idx.size
    out = {
        "E_K": np.empty((n_nodes, n)), "cumulative": np.zeros((n_nodes, n)),
        "grid_states": np.empty((n_nodes, dim, n), dtype=complex) if store else None,
        "segment_energies": np.full((len(d.segments), n), np.nan),
    }
    dts = np.diff(edges)
    tr = _Transport(states0.copy())
    integral, coarse, fine = np.zeros(n), np.zeros(n), np.zeros(n)
    node_lookup = {int(k): j for j, k in enumerate(node_idx)}
    seg = out["segment_energies"]
    for k, key, h, w, v in _iter_pieces(d, edges):
        tr.enter(key, v)
        pw = tr.weights
        e = w @ pw
        if k in node_lookup:
            j = node_lookup[k]
            # kicked nodes see the segment that starts there (right-continuous)
            out["E_K"][j] = e
            out["cumulative"][j] = integral
            if store:
                out["grid_states"][j] = tr.psi
        tau = dts[k]
        integral += tau * e
        if np.isnan(seg[key[1], 0]):
            seg[key[1]] = e
        # <psi(t+s)|psi(t)> = sum_a |phi_a|^2 exp(i w_a s) while H is constant
        o_c = np.exp(1j * w * tau) @ pw
        o_f = np.exp(0.5j * w * tau) @ pw
        _check_links(o_c[None], edges[k:k + 1])
        coarse += np.angle(o_c)
        # both half-step links have the same overlap while H is constant
        fine += 2 * np.angle(o_f)
        tr.advance(w, tau)
    out.update(psi=tr.psi, integral=integral, coarse=coarse, fine=fine)
    return out


def _scan_continuous(d, edges, node_idx, states0, store, chunk: int = 256):
    """Midpoint-rule transport; everything except the state recursion is batched."""
    dim, n = states0.shape
    n_nodes = node_idx.size
    e_k = np.empty((n_nodes, n))
    cumulative = np.zeros((n_nodes, n))
    grid_states = np.empty((n_nodes, dim, n), dtype=complex) if store else None
    mids = 0.5 * (edges[1:] + edges[:-1])
    dts = np.diff(edges)
    psi = states0.copy()
    integral, coarse, fine = np.zeros(n), np.zeros(n), np.zeros(n)
    for c in range(0, mids.size, chunk):
        sl = slice(c, min(c + chunk, mids.size))
        hs = d.hamiltonians(mids[sl])
        if not np.all(np.isfinite(hs)):
            raise ValueError("drive produced a non-finite Hamiltonian sample")
        hs = 0.5 * (hs + np.conj(np.swapaxes(hs, 1, 2)))
        ws, vs = np.linalg.eigh(hs)
        tau = dts[sl]
        us = (vs * np.exp(-1j * ws * tau[:, None])[:, None, :]) @ np.conj(np.swapaxes(vs, 1, 2))
        m = hs.shape[0]
        psis = np.empty((m + 1, dim, n), dtype=complex)
        psis[0] = psi
        if dim <= SCAN_MAX_DIM:
            psis[1:] = prefix_products(us) @ psi
        else:
            for j in range(m):
                psis[j + 1] = us[j] @ psis[j]
        pw = np.abs(np.conj(np.swapaxes(vs, 1, 2)) @ psis[:-1]) ** 2  # (m, dim, n)
        e = np.einsum("ka,kan->kn", ws, pw)
        steps = tau[:, None] * e
        before = integral + np.concatenate([np.zeros((1, n)), np.cumsum(steps, axis=0)[:-1]])
        o_c = np.einsum("ka,kan->kn", np.exp(1j * ws * tau[:, None]), pw)
        o_f = np.einsum("ka,kan->kn", np.exp(0.5j * ws * tau[:, None]), pw)
        _check_links(o_c, edges[sl])
        coarse += np.angle(o_c).sum(axis=0)
        fine += 2 * np.angle(o_f).sum(axis=0)
        integral = integral + steps.sum(axis=0)
        for j, k in enumerate(node_idx):
            if sl.start <= k < sl.stop:
                st = psis[k - sl.start]
                e_k[j] = _expect(d.hamiltonian(edges[k]), st)
                cumulative[j] = before[k - sl.start]
                if store:
                    grid_states[j] = st
        psi = psis[-1]
    return {"E_K": e_k, "cumulative": cumulative, "grid_states": grid_states, "psi": psi,
            "integral": integral, "coarse": coarse, "fine": fine}


def solve_kato(
    sol: FloquetSolution,
    grid_points: int = 256,
    steps: int | None = None,
    substeps: int = KICKED_SUBSTEPS,
    store_states: bool | None = None,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> KatoResult:
    """Kato energies, averages, Berry phases and grid states for a Floquet solution.

    ``steps`` sets the integrator steps per period for continuous drives
    (rounded up to a multiple of ``grid_points``); ``substeps`` splits each
    kicked segment.  Both only affect the Berry-phase discretization and the
    sampled curves; ``xi_K`` is exact for the piecewise-constant dynamics.
    """
    d = sol.drive
    dim = sol.dim
    T = sol.period
    grid, edges, node_idx = _schedule(sol, grid_points, steps, substeps)
    if store_states is None:
        store_states = dim <= STORE_MAX_DIM

    states0 = sol.states.copy()
    theta = sol.theta_F.copy()
    unresolved = []
    clusters = list(sol.clusters)
    if clusters:
        forms = _cluster_kato_form(sol, edges, clusters)
        for c in clusters:
            dec = eigh(0.5 * (forms[c] + forms[c].conj().T), tol=1e-6)
            if np.all(np.diff(dec.eigenvalues) > degeneracy_tol):
                states0[:, list(c)] = states0[:, list(c)] @ dec.eigenvectors
            elif c in sol.unresolved_clusters:
                unresolved.append(c)
        states0 = fix_phases(states0)

    scan = _scan_kicked if d.is_kicked else _scan_continuous
    out = scan(d, edges, node_idx, states0, store_states)
    psi = out["psi"]
    e_k, cumulative, grid_states = out["E_K"], out["cumulative"], out["grid_states"]
    integral, coarse, fine = out["integral"], out["coarse"], out["fine"]
    e_k[-1] = _expect(d.hamiltonian(edges[-1]), psi)
    cumulative[-1] = integral
    if grid_states is not None:
        grid_states[-1] = psi
    closure = column_overlaps(states0, psi)
    if np.abs(closure).min() < MIN_OVERLAP:
        raise GridRefinementError(float(edges[-1]), float(np.abs(closure).min()))

    xi = integral / T
    discrete = (4 * fine - coarse) / 3
    # Bargmann invariant with closure: gamma = -arg[<psi0|psi(T)> prod <psi_{j+1}|psi_j>]
    gamma_raw = -np.angle(closure) - discrete
    theta_closure = principal_phase(-np.angle(closure))
    gamma = principal_phase(theta_closure - discrete) + 2 * np.pi * sol.unfolding.as_array()
    # eigensolver and transport phases agree; keep the eigensolver value
    theta_out = np.where(np.abs(principal_phase(theta_closure - theta)) < 1e-6, theta, theta_closure)
    return KatoResult(
        floquet=sol, states0=states0, theta_F=theta_out, times=grid, E_K=e_k,
        cumulative=cumulative, xi_K=xi, gamma=gamma, gamma_raw=gamma_raw,
        dynamic_integral_discrete=discrete, grid_states=grid_states,
        segment_energies=out.get("segment_energies"), unresolved=tuple(unresolved),
    )


def kato_energies(sol: FloquetSolution, grid_points: int = 256, **kw) -> tuple[np.ndarray, np.ndarray]:
    """``(times, E_K)`` with ``E_K[j, n] = <psi_n[t_j]|H(t_j)|psi_n[t_j]>``."""
    res = solve_kato(sol, grid_points=grid_points, store_states=False, **kw)
    return res.times, res.E_K


def kato_average(times: np.ndarray, energies: np.ndarray, t: float | None = None) -> np.ndarray:
    """Trapezoidal running average ``t^-1 int_0^t E_K ds`` on a sample grid.

    ``t=None`` averages over the whole grid; ``t=0`` returns ``E_K(0)``.
    """
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if t is None:
        t = times[-1]
    if t > times[-1] * (1 + 1e-12) or t < times[0]:
        raise ValueError("t outside the sampled interval")
    if t == times[0]:
        return energies[0].copy()
    cum = np.concatenate(
        [np.zeros((1,) + energies.shape[1:]),
         np.cumsum(0.5 * np.diff(times)[:, None] * (energies[1:] + energies[:-1]), axis=0)]
    )
    c = np.array([np.interp(t, times, cum[:, n]) for n in range(energies.shape[1])])
    return c / (t - times[0])


def berry_phases(states: np.ndarray) -> np.ndarray:
    """Discrete parallel-transport phases from states on a closed grid.

    ``states`` has shape ``(n_grid + 1, dim, n_levels)``; the last entry
    represents the same rays as the first (with any phases).  Returns
    ``gamma_n = -arg[<psi_0|psi_N> prod_j <psi_{j+1}|psi_j>]`` in (-pi, pi],
    invariant under independent phase changes of every grid state.
    """
    states = np.asarray(states, dtype=complex)
    links = np.einsum("tij,tij->tj", states[1:].conj(), states[:-1])
    closure = np.einsum("ij,ij->j", states[0].conj(), states[-1])
    mags = np.abs(links)
    if mags.size and mags.min() < MIN_OVERLAP:
        j = int(np.unravel_index(np.argmin(mags), mags.shape)[0])
        raise GridRefinementError(float(j), float(mags.min()))
    if np.abs(closure).min() < MIN_OVERLAP:
        raise GridRefinementError(float(states.shape[0] - 1), float(np.abs(closure).min()))
    total = np.angle(closure) + np.angle(links).sum(axis=0)
    return principal_phase(-total)


def kato_agp(states: np.ndarray, times: np.ndarray, j: int, periodic: bool = True,
             segment_edges: np.ndarray | None = None) -> np.ndarray:
    """``A_K = 1/2 sum_n [i dP_n/dt, P_n]`` by finite differences of grid projectors.

    ``states[j]`` holds the (column) states at ``times[j]`` on a uniform grid.
    On a closed periodic grid (last node equal to the first) the central
    stencil wraps.  ``segment_edges`` (kick times, same clock as ``times``)
    keep the stencil inside one segment: next to a kick a one-sided
    second-order formula is used, with nodes on a kick belonging to the
    segment that starts there.
    """
    states = np.asarray(states)
    n = states.shape[0]
    dt = times[1] - times[0]
    m = n - 1 if periodic else n
    period = m * dt
    eps = 1e-9 * dt
    edges = None if segment_edges is None else np.asarray(segment_edges, dtype=float)

    def node(k):
        return k % m if periodic else k

    def exists(k):
        return periodic or 0 <= k < n

    shifted = None
    if edges is not None:
        shifted = (edges[:, None] + period * np.arange(-2, 3)[None, :]).ravel() if periodic else edges

    def clean(a):
        """True when no kick lies strictly inside (t_a, t_a+1)."""
        if shifted is None:
            return True
        ta = times[0] + a * dt
        return not np.any((shifted > ta + eps) & (shifted < ta + dt - eps))

    def on_kick(k):
        if shifted is None:
            return False
        return bool(np.any(np.abs(shifted - (times[0] + k * dt)) < eps))

    def proj(k):
        v = states[node(k)]
        return np.einsum("in,jn->nij", v, v.conj())

    left = exists(j - 1) and clean(j - 1) and not on_kick(j)
    right = exists(j + 1) and clean(j)
    if left and right:
        dp = (proj(j + 1) - proj(j - 1)) / (2 * dt)
    elif right and exists(j + 2) and clean(j + 1) and not on_kick(j + 1):
        dp = (-3 * proj(j) + 4 * proj(j + 1) - proj(j + 2)) / (2 * dt)
    elif left and exists(j - 2) and clean(j - 2) and not on_kick(j - 1):
        dp = (3 * proj(j) - 4 * proj(j - 1) + proj(j - 2)) / (2 * dt)
    else:
        raise ValueError("no finite-difference stencil fits inside the segment; refine the grid")
    p = proj(j)
    # ordering fixed by <psi_m|A_K|psi_n> = <psi_m|i d_t psi_n> for m != n
    a = 0.5j * (dp @ p - p @ dp).sum(axis=0)
    return 0.5 * (a + a.conj().T)


def kato_agp_at(kato: KatoResult, t: float) -> np.ndarray:
    """Exact ``A_K(t)``: the off-diagonal part of ``H(t)`` in the Floquet basis at ``t``.

    Uses ``<psi_m|i d_t psi_n> = <psi_m|H|psi_n>`` for ``m != n``, which holds
    for states transported by the Schroedinger equation.
    """
    from .floquet import evolution

    u = evolution(kato.floquet, t)
    v = u @ kato.states0
    h = kato.drive.hamiltonian(kato.gauge_t0 + t)
    hk = kato_hamiltonian_from_states(h, v)
    return h - hk


def kato_hamiltonian_from_states(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``sum_n P_n H P_n`` for an orthonormal column basis ``v``."""
    diag = np.real(np.einsum("in,ij,jn->n", v.conj(), h, v))
    return (v * diag) @ v.conj().T


def kato_hamiltonian(h: np.ndarray, a_k: np.ndarray) -> np.ndarray:
    """``H_K(t) = H(t) - A_K(t)``."""
    out = np.asarray(h) - np.asarray(a_k)
    return 0.5 * (out + out.conj().T)


def kato_hamiltonian_at(kato: KatoResult, t: float) -> np.ndarray:
    return kato_hamiltonian(kato.drive.hamiltonian(kato.gauge_t0 + t), kato_agp_at(kato, t))


def gamma_in_gauge(kato: KatoResult, gauge: UnfoldingGauge) -> np.ndarray:
    """Berry phases for another unfolding gauge: shifted by ``2 pi (l' - l)``."""
    delta = np.array(gauge.shifts) - kato.unfolding.as_array()
    return kato.gamma + 2 * np.pi * delta


def wilson_line(kato: KatoResult) -> np.ndarray:
    """``exp(-i Gamma(T, 0)) = sum_n exp(-i gamma_n) |psi_n[0]><psi_n[0]|``."""
    v = kato.states0
    return (v * np.exp(-1j * kato.gamma)) @ v.conj().T


def kato_operator(xi: np.ndarray, states: np.ndarray) -> np.ndarray:
    """``Xi_K(T, 0) = sum_n xi_n |psi_n><psi_n|``."""
    h = (states * np.asarray(xi)) @ states.conj().T
    return 0.5 * (h + h.conj().T)


def reconstruct_monodromy(kato: KatoResult) -> np.ndarray:
    """``exp(-i Gamma) exp(-i T Xi_K)``, to be compared with ``U(T, 0)``."""
    v = kato.states0
    xi_op = (v * np.exp(-1j * kato.period * kato.xi_K)) @ v.conj().T
    return wilson_line(kato) @ xi_op


# ---------------------------------------------------------------------------
# counterdiabatic gauge choices along a closed control loop


@dataclass(frozen=True)
class GaugeShiftResult:
    phases: np.ndarray  # accumulated phase Phi_n with psi_n(T) = e^{-i Phi_n} psi_n(0), in (-pi, pi]
    fidelity: np.ndarray  # |<n(0)|psi_n(T)>|
    dynamical: np.ndarray  # int E_n dt


def _kato_agp_parameter(h: np.ndarray, dh: np.ndarray, gap_tol: float = 1e-9):
    w, v = np.linalg.eigh(h)
    if np.any(np.diff(w) < gap_tol):
        raise DegeneracyError("degenerate control spectrum on the path")
    m = v.conj().T @ dh @ v
    de = w[None, :] - w[:, None]  # E_n - E_m at (m, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(np.eye(len(w), dtype=bool), 0, 1j * m / de)
    return w, v, v @ a @ v.conj().T


def gauge_shift_evolution(
    control,
    lam,
    lam_dot,
    duration: float,
    chi_dot=None,
    steps: int = 20000,
    dcontrol=None,
    closure_tol: float = 1e-10,
) -> GaugeShiftResult:
    """Evolve eigenstates under ``H_ctrl + lam' A_K + sum_n chi_n' P_n`` around a closed loop.

    ``control(l)`` gives the control Hamiltonian, ``lam(t)`` the path with
    ``lam_dot`` its derivative, ``chi_dot(t)`` a per-level vector of gauge
    phase rates.  With the Kato potential alone the state acquires
    ``gamma_n + phi_n`` (Berry plus dynamical); extra ``chi_n`` adds ``chi_n(T) - chi_n(0)``.
    """
    l0, l1 = lam(0.0), lam(duration)
    h0 = np.asarray(control(l0), dtype=complex)
    if np.abs(np.asarray(control(l1)) - h0).max() > closure_tol * max(1.0, np.abs(h0).max()):
        raise ValueError("control path is not closed")
    if dcontrol is None:
        eps = 1e-5

        def dcontrol(l):
            return (np.asarray(control(l + eps)) - np.asarray(control(l - eps))) / (2 * eps)

    w0, v0, _ = _kato_agp_parameter(h0, np.asarray(dcontrol(l0)))
    psi = v0.copy()
    dt = duration / steps
    dyn = np.zeros(len(w0))
    for j in range(steps):
        tm = (j + 0.5) * dt
        l = lam(tm)
        h = np.asarray(control(l), dtype=complex)
        w, v, a = _kato_agp_parameter(h, np.asarray(dcontrol(l)))
        htot = h + lam_dot(tm) * a
        if chi_dot is not None:
            htot = htot + (v * np.asarray(chi_dot(tm))) @ v.conj().T
        ww, vv = np.linalg.eigh(0.5 * (htot + htot.conj().T))
        psi = (vv * np.exp(-1j * ww * dt)) @ (vv.conj().T @ psi)
        dyn += dt * w
    ov = column_overlaps(v0, psi)
    return GaugeShiftResult(principal_phase(-np.angle(ov)), np.abs(ov), dyn)
