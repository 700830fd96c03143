"""Time-ordered evolution ``U(t1, t0) = T exp(-i int H)``.

Continuous drives use the exponential midpoint rule (second order); kicked
drives are propagated exactly as ordered products of segment exponentials.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .drives import DriveProtocol

__all__ = [
    "DEFAULT_STEPS",
    "MAX_STEPS",
    "pieces",
    "iter_steps",
    "propagate",
    "propagate_states",
    "step_unitaries",
    "ordered_product",
    "prefix_products",
    "monodromy",
    "converged_steps",
]

DEFAULT_STEPS = 2048
MAX_STEPS = 2**16
_CHUNK = 256


def pieces(d: DriveProtocol, t0: float, t1: float, steps: int | None = None,
           substeps: int = 1):
    """Boundaries of the constant-Hamiltonian pieces covering ``[t0, t1]``.

    Returns ``(bounds, hamiltonian_times)``.  For kicked drives each segment
    overlap is split into ``substeps`` equal parts and the Hamiltonian is
    sampled at piece midpoints (exact, since it is constant there).  For
    continuous drives ``steps`` equal pieces with midpoint samples.
    """
    if not (np.isfinite(t0) and np.isfinite(t1)):
        raise ValueError("times must be finite")
    if t1 < t0:
        raise ValueError("propagation requires t1 >= t0")
    if t1 == t0:
        return np.array([t0]), np.zeros(0)
    if d.is_kicked:
        T = d.period
        rel = d.segment_times()
        n0, n1 = int(np.floor(t0 / T)), int(np.ceil(t1 / T))
        edges = np.concatenate([n * T + rel[:-1] for n in range(n0, n1 + 1)] + [[t1]])
        edges = np.unique(np.clip(edges, t0, t1))
        # drop slivers produced by floating point at segment edges
        keep = np.concatenate([[True], np.diff(edges) > 1e-14 * max(T, abs(t1))])
        edges = edges[keep]
        edges[-1] = t1
        if substeps > 1:
            frac = np.arange(substeps) / substeps
            edges = np.concatenate(
                [a + (b - a) * frac for a, b in zip(edges[:-1], edges[1:])] + [[t1]]
            )
        mids = 0.5 * (edges[1:] + edges[:-1])
        return edges, mids
    if steps is None:
        steps = max(1, int(np.ceil(DEFAULT_STEPS * (t1 - t0) / d.period)))
    if steps < 1:
        raise ValueError("steps must be a positive integer")
    edges = np.linspace(t0, t1, int(steps) + 1)
    return edges, 0.5 * (edges[1:] + edges[:-1])


def _exp_batch(hs: np.ndarray, dts: np.ndarray) -> np.ndarray:
    """Stack of ``exp(-i dt_j H_j)``.

    Short steps (``||H dt||_1 <= 1/4``) use a Taylor polynomial whose degree
    is chosen so the truncation error stays below 1e-17; longer steps fall
    back to eigendecomposition.
    """
    if not np.all(np.isfinite(hs)):
        raise ValueError("drive produced a non-finite Hamiltonian sample")
    hs = 0.5 * (hs + np.conj(np.swapaxes(hs, 1, 2)))
    x = -1j * hs * dts[:, None, None]
    norms = np.abs(x).sum(axis=1).max(axis=1)
    small = norms <= 0.25
    out = np.empty_like(x)
    if np.any(small):
        xs = x[small]
        theta = norms[small].max()
        deg, term = 1, theta
        while term * theta / (deg + 1) > 1e-17:
            deg += 1
            term *= theta / deg
        eye = np.eye(x.shape[1], dtype=complex)
        acc = eye + xs / deg
        for k in range(deg - 1, 0, -1):
            acc = eye + (xs @ acc) / k
        out[small] = acc
    if np.any(~small):
        w, v = np.linalg.eigh(hs[~small])
        ph = np.exp(-1j * w * dts[~small][:, None])
        out[~small] = (v * ph[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
    return out


step_unitaries = _exp_batch

# below this dimension a batched prefix scan beats a Python-level loop
SCAN_MAX_DIM = 16


def ordered_product(us: np.ndarray) -> np.ndarray:
    """``U_{m-1} ... U_1 U_0`` by pairwise (tree) reduction of a stack."""
    us = np.asarray(us)
    while us.shape[0] > 1:
        if us.shape[0] % 2:
            head, us = us[-1:], us[:-1]
            us = np.concatenate([us[1::2] @ us[0::2], head])
        else:
            us = us[1::2] @ us[0::2]
    return us[0]


def prefix_products(us: np.ndarray) -> np.ndarray:
    """Stack ``P_j = U_j ... U_0`` for ``j = 0..m-1``.

    Uses a logarithmic-depth scan for small matrices and a plain loop otherwise.
    """
    p = np.array(us, dtype=complex)
    m = p.shape[0]
    if p.shape[-1] <= SCAN_MAX_DIM:
        shift = 1
        while shift < m:
            p[shift:] = p[shift:] @ p[:-shift]
            shift *= 2
        return p
    for j in range(1, m):
        p[j] = p[j] @ p[j - 1]
    return p


def iter_steps(d: DriveProtocol, t0: float, t1: float, steps: int | None = None,
               substeps: int = 1) -> Iterator[tuple[float, float, np.ndarray, np.ndarray]]:
    """Yield ``(ta, tb, H, U_step)`` for consecutive pieces of ``[t0, t1]``."""
    edges, mids = pieces(d, t0, t1, steps, substeps)
    dts = np.diff(edges)
    if d.is_kicked:
        cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for j, tm in enumerate(mids):
            s = d.segment_index(tm)
            if s not in cache:
                h = d.segments[s].hamiltonian
                cache[s] = np.linalg.eigh(h)
            w, v = cache[s]
            u = (v * np.exp(-1j * w * dts[j])) @ v.conj().T
            yield edges[j], edges[j + 1], d.segments[s].hamiltonian, u
        return
    for c in range(0, mids.size, _CHUNK):
        hs = d.hamiltonians(mids[c:c + _CHUNK])
        us = _exp_batch(hs, dts[c:c + _CHUNK])
        for j in range(hs.shape[0]):
            yield edges[c + j], edges[c + j + 1], hs[j], us[j]


def propagate(d: DriveProtocol, t0: float, t1: float, steps: int | None = None) -> np.ndarray:
    """``U(t1, t0)``.  ``steps`` counts midpoint steps over the whole interval
    and is ignored for kicked drives."""
    u = np.eye(d.dim, dtype=complex)
    if d.is_kicked:
        for _, _, _, us in iter_steps(d, t0, t1, steps):
            u = us @ u
        return u
    edges, mids = pieces(d, t0, t1, steps)
    dts = np.diff(edges)
    for c in range(0, mids.size, _CHUNK):
        u = ordered_product(_exp_batch(d.hamiltonians(mids[c:c + _CHUNK]), dts[c:c + _CHUNK])) @ u
    return u


def propagate_states(d: DriveProtocol, psi: np.ndarray, t0: float, t1: float,
                     steps: int | None = None) -> np.ndarray:
    """Apply ``U(t1, t0)`` to a column-stacked set of states."""
    psi = np.array(psi, dtype=complex)
    for _, _, _, us in iter_steps(d, t0, t1, steps):
        psi = us @ psi
    return psi


def converged_steps(d: DriveProtocol, t0: float = 0.0, tol: float = 1e-9,
                    start: int = DEFAULT_STEPS, max_steps: int = MAX_STEPS):
    """Double the per-period step count until the monodromy changes by < ``tol``.

    Returns ``(steps, U, change)``; ``change`` is the last max-norm difference
    (``0.0`` for kicked drives, which are exact).
    """
    if d.is_kicked:
        return 0, propagate(d, t0, t0 + d.period), 0.0
    n = int(start)
    u = propagate(d, t0, t0 + d.period, n)
    change = np.inf
    while n < max_steps:
        u2 = propagate(d, t0, t0 + d.period, 2 * n)
        change = float(np.abs(u2 - u).max())
        n, u = 2 * n, u2
        if change < tol:
            break
    return n, u, change


def monodromy(d: DriveProtocol, t0: float = 0.0, steps: int | None = None,
              tol: float = 1e-9, max_steps: int = MAX_STEPS) -> np.ndarray:
    """One-period propagator ``U(t0 + T, t0)``.

    With ``steps=None`` continuous drives are refined adaptively (see
    :func:`converged_steps`); otherwise ``steps`` midpoint steps are used.
    """
    if steps is None and not d.is_kicked:
        return converged_steps(d, t0, tol, max_steps=max_steps)[1]
    return propagate(d, t0, t0 + d.period, steps)
