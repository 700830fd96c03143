"""Band tracking across parameter sweeps and photon-index bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "AMBIGUITY_MARGIN",
    "PHOTON_THRESHOLD",
    "AmbiguousAssignmentError",
    "BandTrack",
    "match_levels",
    "track",
    "reference_overlap",
    "photon_index",
    "band_statistics",
    "band_photon_index",
    "SectorPairs",
    "pair_sectors",
    "pair_differences",
]

AMBIGUITY_MARGIN = 0.05
PHOTON_THRESHOLD = 0.2
GREEDY_ABOVE = 512


class AmbiguousAssignmentError(RuntimeError):
    """Two candidate levels overlap almost equally well; the grid needs refinement."""

    def __init__(self, index: int, parameter: float, band: int, best: float, second: float):
        super().__init__(
            f"ambiguous band assignment at grid index {index} (parameter {parameter:.6g}), "
            f"band {band}: |overlap| {best:.3f} vs {second:.3f}; refine the sweep near here"
        )
        self.index = index
        self.parameter = parameter
        self.band = band


@dataclass(frozen=True, eq=False)
class BandTrack:
    """Levels followed continuously along ``parameters``.

    ``indices[p, b]`` is the level (column) index of band ``b`` at grid
    point ``p``.  ``values[name][p, b]`` holds tracked quantities in band
    order.  ``overlaps[p, b]`` is ``|<band at p-1|band at p>|`` (1 at p=0).
    """

    parameters: np.ndarray
    indices: np.ndarray
    values: Mapping[str, np.ndarray]
    overlaps: np.ndarray
    flagged: tuple = field(default=())

    @property
    def n_bands(self) -> int:
        return self.indices.shape[1]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]


def _degenerate(qs: Sequence[np.ndarray], i: int, j: int, tol: float) -> bool:
    return all(abs(q[i] - q[j]) < tol for q in qs)


def match_levels(prev: np.ndarray, cur: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Optimal assignment of ``cur`` columns to ``prev`` columns.

    Returns ``(perm, ov)`` with ``perm[i]`` the column of ``cur`` matched to
    column ``i`` of ``prev`` and ``ov`` the ``|overlap|`` matrix.
    """
    ov = np.abs(prev.conj().T @ cur)
    n = ov.shape[0]
    if n > GREEDY_ABOVE:
        perm = -np.ones(n, dtype=int)
        taken = np.zeros(ov.shape[1], dtype=bool)
        for i in np.argsort(-ov.max(axis=1)):
            row = np.where(taken, -1.0, ov[i])
            j = int(np.argmax(row))
            perm[i] = j
            taken[j] = True
        return perm, ov
    r, c = linear_sum_assignment(-(ov**2))
    perm = np.empty(n, dtype=int)
    perm[r] = c
    return perm, ov


def track(parameters, states: Sequence[np.ndarray], quantities: Mapping[str, Sequence[np.ndarray]] | None = None,
          margin: float = AMBIGUITY_MARGIN, degeneracy_tol: float = 1e-9, strict: bool = True,
          initial_order: np.ndarray | None = None) -> BandTrack:
    """Follow levels across a sweep by maximizing total ``|overlap|^2``.

    ``states[p]`` holds the level states (columns) at point ``p``.  An
    assignment is ambiguous when a second candidate's ``|overlap|`` lies
    within ``margin`` of the chosen one, unless the two candidates are
    degenerate in every tracked quantity (then either label is equivalent).
    Ambiguities raise :class:`AmbiguousAssignmentError` when ``strict`` and are
    collected in ``flagged`` otherwise.
    """
    params = np.asarray(parameters, dtype=float)
    if len(states) != params.size:
        raise ValueError("one state set per grid point is required")
    quantities = dict(quantities or {})
    n = states[0].shape[1]
    order = np.arange(n) if initial_order is None else np.asarray(initial_order)
    indices = np.empty((params.size, n), dtype=int)
    indices[0] = order
    overlaps = np.ones((params.size, n))
    flagged = []
    for p in range(1, params.size):
        prev = states[p - 1][:, indices[p - 1]]
        perm, ov = match_levels(prev, states[p])
        qs = [np.asarray(q[p]) for q in quantities.values()]
        for b in range(n):
            j = perm[b]
            best = ov[b, j]
            others = np.delete(np.arange(ov.shape[1]), j)
            if others.size == 0:
                continue
            k = others[np.argmax(ov[b, others])]
            if ov[b, k] > best - margin and not _degenerate(qs, j, k, degeneracy_tol):
                if strict:
                    raise AmbiguousAssignmentError(p, float(params[p]), b, float(best), float(ov[b, k]))
                flagged.append((p, b))
        indices[p] = perm
        overlaps[p] = ov[np.arange(n), perm]
    values = {
        name: np.array([np.asarray(q[p])[indices[p]] for p in range(params.size)])
        for name, q in quantities.items()
    }
    return BandTrack(params, indices, values, overlaps, tuple(flagged))


def reference_overlap(bt: BandTrack, states: Sequence[np.ndarray], reference: np.ndarray) -> np.ndarray:
    """``F_0[p, b] = |<ref|psi_b(p)>|^2`` in band order (rows sum to one for complete sets)."""
    ref = np.asarray(reference, dtype=complex).ravel()
    ref = ref / np.linalg.norm(ref)
    out = np.empty(bt.indices.shape)
    for p, s in enumerate(states):
        out[p] = np.abs(ref.conj() @ s[:, bt.indices[p]]) ** 2
    return out


def photon_index(xi: np.ndarray, eps_folded: np.ndarray, omega: float,
                 threshold: float = PHOTON_THRESHOLD) -> tuple[np.ndarray, np.ndarray]:
    """``l_n = round((xi_n - eps_n) / w)`` and a mask of resolved entries.

    Entries farther than ``threshold`` (in units of ``w``) from an integer are
    flagged unresolved; they mark resonance neighborhoods.
    """
    x = (np.asarray(xi) - np.asarray(eps_folded)) / omega
    ell = np.rint(x).astype(int)
    resolved = np.abs(x - ell) <= threshold
    return ell, resolved


def band_statistics(bt: BandTrack, name: str = "xi") -> dict:
    """Per-band spread and maximal consecutive jump of a tracked quantity."""
    v = bt.values[name]
    jumps = np.abs(np.diff(v, axis=0)) if v.shape[0] > 1 else np.zeros((0, v.shape[1]))
    return {
        "mean": v.mean(axis=0),
        "std": v.std(axis=0),
        "max_jump": jumps.max(axis=0) if jumps.size else np.zeros(v.shape[1]),
    }


def band_photon_index(xi, theta, period: float, threshold: float = PHOTON_THRESHOLD):
    """Photon index along one tracked band.

    ``theta`` is unwrapped along the band so that it follows the Floquet
    level continuously; ``x = (T xi - theta) / 2 pi`` then counts the photons
    separating the Kato energy from that branch.  Returns ``(x, ell,
    resolved)``; a resonance shows up as unresolved points or a change of
    ``ell`` between neighbors.
    """
    th = np.unwrap(np.asarray(theta, dtype=float))
    x = (period * np.asarray(xi, dtype=float) - th) / (2 * np.pi)
    ell = np.rint(x).astype(int)
    return x, ell, np.abs(x - ell) <= threshold


@dataclass(frozen=True)
class SectorPairs:
    plus: np.ndarray  # level indices in the +1 sector
    minus: np.ndarray  # partner indices in the -1 sector
    weight: np.ndarray  # matching score of each pair


def pair_sectors(states: np.ndarray, symmetry: np.ndarray, diagonals: Sequence[np.ndarray]) -> SectorPairs:
    """Pair levels of opposite symmetry eigenvalue (+1/-1).

    Partners maximize ``sum_i |<minus|O_i|plus>|^2`` with ``O_i`` diagonal
    operators given by their diagonals, e.g. the ``sigma^z_i`` of a spin
    chain, which connect the two members of a cat-state pair.
    """
    v = np.asarray(states)
    sym = np.real(np.einsum("in,ij,jn->n", v.conj(), symmetry, v))
    if np.any(np.abs(np.abs(sym) - 1) > 1e-6):
        raise ValueError("states are not symmetry eigenstates")
    plus, minus = np.where(sym > 0)[0], np.where(sym < 0)[0]
    if plus.size != minus.size:
        raise ValueError("sectors have different sizes")
    score = np.zeros((plus.size, minus.size))
    for dg in diagonals:
        score += np.abs((v[:, plus].conj().T * np.asarray(dg)) @ v[:, minus]) ** 2
    r, c = linear_sum_assignment(-score)
    return SectorPairs(plus[r], minus[c], score[r, c])


def pair_differences(pairs: SectorPairs, theta, gamma, xi) -> dict:
    """``delta_theta`` and ``delta_gamma`` wrapped to [0, 2 pi), ``delta_xi`` plain."""
    theta, gamma, xi = (np.asarray(a) for a in (theta, gamma, xi))
    a, b = pairs.plus, pairs.minus
    return {
        "delta_theta": np.mod(theta[a] - theta[b], 2 * np.pi),
        "delta_gamma": np.mod(gamma[a] - gamma[b], 2 * np.pi),
        "delta_xi": xi[a] - xi[b],
    }
