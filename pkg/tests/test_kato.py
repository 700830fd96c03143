from __future__ import annotations

import numpy as np
import pytest

from geofloquet import drives as dv
from geofloquet import floquet as fl
from geofloquet import kato as ka
from geofloquet.numkernel import principal_phase
from conftest import random_hermitian

XY_XI = 0.73002131615468  # eps_K^2 / (2 eps) for the default XY block


@pytest.fixture(scope="module")
def xy():
    p = dv.XYBlochParams()
    sol = fl.solve_floquet(dv.xy_bloch(p), steps=4096)
    return p, sol, ka.solve_kato(sol)


def test_xy_kato_energies(xy):
    _, _, k = xy
    assert np.sort(k.xi_K) == pytest.approx([-XY_XI, XY_XI], abs=1e-8)


def test_xy_kato_potential_matches_closed_form(xy):
    p, _, k = xy
    for t in (0.0, 0.13, 0.4):
        cf = dv.xy_closed_forms(p, t)
        assert np.abs(ka.kato_agp_at(k, t) - cf.a_K).max() < 1e-7
        assert np.abs(ka.kato_hamiltonian_at(k, t) - cf.h_K).max() < 1e-7


def test_finite_difference_potential_matches_exact(xy):
    _, _, k = xy
    j = 37
    fd = ka.kato_agp(k.grid_states, k.times, j)
    # central differences on 256 nodes: O(dt^2) error
    assert np.abs(fd - ka.kato_agp_at(k, k.times[j])).max() < 1e-4


def test_phase_bookkeeping(xy):
    _, sol, k = xy
    assert np.abs(k.consistency).max() < 1e-10
    assert np.abs(ka.reconstruct_monodromy(k) - sol.monodromy).max() < 1e-10
    assert k.xi_running(k.period) == pytest.approx(k.xi_K, abs=1e-12)
    assert ka.kato_average(k.times, k.E_K) == pytest.approx(k.xi_K, abs=1e-6)


def test_berry_phase_grid_estimate(xy):
    _, _, k = xy
    g = ka.berry_phases(k.grid_states)
    assert np.abs(principal_phase(g - k.gamma)).max() < 1e-4


def test_berry_phases_ignore_grid_state_phases(xy, rng):
    _, _, k = xy
    states = k.grid_states * np.exp(2j * np.pi * rng.random(k.grid_states.shape[::2])[:, None, :])
    assert np.abs(principal_phase(ka.berry_phases(states) - ka.berry_phases(k.grid_states))).max() < 1e-12


def test_coarse_grid_is_rejected(xy):
    _, _, k = xy
    with pytest.raises(ka.GridRefinementError):
        ka.berry_phases(k.grid_states[::128][:, :, :] * 0 + np.array([[[1, 0], [0, 1]], [[0, 1], [1, 0]], [[1, 0], [0, 1]]]))


def test_gauge_time_invariance():
    d = dv.xy_bloch(dv.XYBlochParams(J=2.0))
    base = np.sort(ka.solve_kato(fl.solve_floquet(d, steps=2048)).xi_K)
    for t0 in (0.1, 0.45):
        k = ka.solve_kato(fl.solve_floquet(d, t0=t0 * d.period, steps=2048))
        assert np.sort(k.xi_K) == pytest.approx(base, abs=1e-10)


def test_unfolding_shifts_gamma_only(xy):
    _, sol, k = xy
    s2 = fl.refold(sol, fl.UnfoldingGauge((2, -1)))
    k2 = ka.solve_kato(s2)
    assert k2.xi_K == pytest.approx(k.xi_K, abs=1e-14)
    assert k2.gamma - k.gamma == pytest.approx(2 * np.pi * np.array([2, -1]), abs=1e-12)
    assert ka.gamma_in_gauge(k, fl.UnfoldingGauge((2, -1))) == pytest.approx(k2.gamma, abs=1e-12)


def test_static_drive_has_no_geometry(rng):
    h = random_hermitian(rng, 3)
    sol = fl.solve_floquet(dv.static_drive(h, 0.9), steps=64, grid_points=16)
    k = ka.solve_kato(sol, grid_points=16)
    assert np.sort(k.xi_K) == pytest.approx(np.linalg.eigvalsh(h), abs=1e-12)
    assert np.abs(k.gamma).max() < 1e-12
    assert np.abs(ka.kato_agp_at(k, 0.3)).max() < 1e-10


def test_kicked_energies_constant_on_segments():
    d = dv.kicked_mfi(dv.KickedMFIParams(L=4, T=0.4))
    sol = fl.solve_floquet(d)
    k = ka.solve_kato(sol, grid_points=8, substeps=8)
    # grid nodes 0..1 lie in the first quarter, 2..5 in the middle half
    assert np.abs(k.E_K[0] - k.E_K[1]).max() < 1e-12
    assert np.abs(k.E_K[2] - k.E_K[5]).max() < 1e-12
    w = np.array([0.25, 0.5, 0.25])
    assert np.abs(w @ k.segment_energies - k.xi_K).max() < 1e-12
    # symmetric degenerate clusters remain; the factorization still holds
    assert sol.unresolved_clusters
    assert np.abs(ka.reconstruct_monodromy(k) - sol.monodromy).max() < 1e-8


def test_kicked_finite_difference_respects_kicks():
    d = dv.kicked_mfi(dv.KickedMFIParams(L=3, T=0.4))
    sol = fl.solve_floquet(d)
    k = ka.solve_kato(sol, grid_points=64, substeps=32)
    edges = d.segment_times()
    for j in (16, 17, 31):  # on the first kick, just after it, just before the second
        fd = ka.kato_agp(k.grid_states, k.times, j, segment_edges=edges)
        assert np.abs(fd - ka.kato_agp_at(k, k.times[j])).max() < 5e-3


def test_kato_operator_and_wilson_line(xy):
    _, _, k = xy
    xi_op = ka.kato_operator(k.xi_K, k.states0)
    assert np.linalg.eigvalsh(xi_op) == pytest.approx(np.sort(k.xi_K), abs=1e-12)
    w = k.wilson
    assert np.abs(w.conj().T @ w - np.eye(2)).max() < 1e-12


def _spin_loop(theta, duration):
    def control(lam):
        b = 1.0 + 0.3 * np.sin(lam)
        n = (np.sin(theta) * np.cos(lam), np.sin(theta) * np.sin(lam), np.cos(theta))
        return 0.5 * b * sum(c * dv.PAULI[a] for c, a in zip(n, "xyz"))

    def lam(t):
        return 2 * np.pi * (t / duration - np.sin(2 * np.pi * t / duration) / (2 * np.pi))

    def lam_dot(t):
        return 2 * np.pi / duration * (1 - np.cos(2 * np.pi * t / duration))

    return control, lam, lam_dot


def test_counterdiabatic_loop_gives_solid_angle_phase():
    theta, duration = 0.7, 40.0
    control, lam, lam_dot = _spin_loop(theta, duration)
    r = ka.gauge_shift_evolution(control, lam, lam_dot, duration, steps=8000)
    assert r.fidelity == pytest.approx([1, 1], abs=1e-10)
    half_solid_angle = 2 * np.pi * np.sin(theta / 2) ** 2
    geo = principal_phase(r.phases - r.dynamical)
    assert geo == pytest.approx(principal_phase(np.array([-1, 1]) * half_solid_angle), abs=1e-6)


def test_gauge_shift_rejects_open_paths_and_degeneracy():
    control, lam, lam_dot = _spin_loop(0.7, 10.0)
    with pytest.raises(ValueError):
        ka.gauge_shift_evolution(control, lambda t: 0.5 * lam(t), lam_dot, 10.0, steps=10)
    with pytest.raises(ka.DegeneracyError):
        ka.gauge_shift_evolution(lambda l: np.zeros((2, 2)), lam, lam_dot, 10.0, steps=10)
