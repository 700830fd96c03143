from __future__ import annotations

import numpy as np
import pytest

from geofloquet import agpsolve as ag
from geofloquet import drives as dv
from geofloquet import floquet as fl
from geofloquet import kato as ka


@pytest.fixture(scope="module")
def random3():
    d = dv.random_fourier_drive(3, 2, 3.0, seed=2)
    sol = fl.solve_floquet(d, steps=4096)
    return d, ka.solve_kato(sol)


def test_vectorize_round_trip(rng):
    h = {l: rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for l in range(-2, 3)}
    op = ag.FourierOperator(h, 2.0)
    back = ag.devectorize(ag.vectorize(op, 2), 2, 2, 2.0)
    for l in h:
        assert np.abs(back.coefficient(l) - h[l]).max() == 0


def test_superoperator_matches_direct_action(rng):
    d = dv.xy_bloch(dv.XYBlochParams())
    h = ag.FourierOperator.from_drive(d, 1)
    x = ag.FourierOperator({l: rng.normal(size=(2, 2)) + 0j for l in (-1, 0, 1)}, h.omega)
    y = ag.devectorize(ag.build_L(h, 3) @ ag.vectorize(x, 3), 2, 3, h.omega)
    t = 0.17
    dx = x.derivative().at(t)
    expect = -1j * (h.at(t) @ x.at(t) - x.at(t) @ h.at(t)) - dx
    assert np.abs(y.at(t) - expect).max() < 1e-12


def test_hamiltonian_satisfies_inhomogeneous_equation():
    d = dv.xy_bloch(dv.XYBlochParams())
    h = ag.FourierOperator.from_drive(d, 1)
    lh = ag.build_L(h, 3) @ ag.vectorize(h, 3)
    assert np.abs(lh + ag.vectorize(h.derivative(), 3)).max() < 1e-12


def test_xy_pseudoinverse_potential_is_exact():
    p = dv.XYBlochParams()
    d = dv.xy_bloch(p)
    h = ag.FourierOperator.from_drive(d, 1)
    s = ag.solve_kato_agp(h, 2)
    for t in (0.0, 0.3, 0.55):
        assert np.abs(ag.kato_agp_from_pinv(s, h, t) - dv.xy_closed_forms(p, t).a_K).max() < 1e-8


def test_random_drive_converges_with_harmonics(random3):
    d, k = random3
    h = ag.FourierOperator.from_drive(d, 2)
    ts = np.arange(8) * d.period / 8
    rows = ag.truncation_sweep(h, (1, 2, 4, 8), oracle=lambda t: ka.kato_agp_at(k, t), ts=ts)
    res = [r["residual"] for r in rows]
    assert all(a > b for a, b in zip(res, res[1:]))
    assert rows[-1]["distance"] < 1e-5


def test_diagonal_profile_averages_to_zero(random3):
    d, _ = random3
    h = ag.FourierOperator.from_drive(d, 2)
    s = ag.solve_kato_agp(h, 8)
    ts = np.arange(64) * d.period / 64
    prof = ag.diagonal_profile(s, h, ts)
    assert np.abs(prof.mean(axis=0)).max() < 1e-5
    # generic drives have time-dependent Kato energies, so the profile itself is not zero
    assert np.abs(prof).max() > 1e-3


def test_plus_potential_is_hamiltonian_minus_kato_operator(random3):
    d, k = random3
    h = ag.FourierOperator.from_drive(d, 2)
    s = ag.solve_kato_agp(h, 12)
    t = 0.4 * d.period
    u = fl.evolution(k.floquet, t)
    v = u @ k.states0
    expect = d.hamiltonian(t) - (v * k.xi_K) @ v.conj().T
    assert np.abs(s.a_plus.at(t) - expect).max() < 1e-6


def test_hfe_zeroth_order_for_static_drive(rng):
    from conftest import random_hermitian

    hm = random_hermitian(rng, 3)
    r = ag.hfe_kato(dv.static_drive(hm, 1.0))
    assert np.sort(r.xi_K0) == pytest.approx(np.linalg.eigvalsh(hm), abs=1e-12)
    assert np.all(r.gamma0 == 0)
    with pytest.raises(NotImplementedError):
        ag.hfe_kato(dv.static_drive(hm, 1.0), order=1)


def test_limits():
    h = ag.FourierOperator({0: np.eye(60, dtype=complex)}, 1.0)
    with pytest.raises(ValueError):
        ag.build_L(h, 3)
    with pytest.raises(ValueError):
        ag.solve_kato_agp(ag.FourierOperator({0: np.eye(2, dtype=complex)}, 1.0), 0)
