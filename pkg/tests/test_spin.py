import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st
from scipy import integrate

from flysq.errors import NumericalError, ParameterError
from flysq.geometry import CellConfig, ChannelConfig, RegionGraph, RateMatrix, build_region_graph, exchange_matrix
from flysq.spin import (
    AtomParams,
    DriftSystem,
    assemble_drift,
    simulate_langevin,
    spin_noise_psd,
    stationary_covariance,
    steady_state,
    susceptibility,
)

ATOM = AtomParams()


def graph_of(n_channels, **kw):
    chans = [ChannelConfig(f"c{i + 1}", 1e-3, **kw) for i in range(n_channels)]
    g = build_region_graph(CellConfig(), chans)
    return g, exchange_matrix(g)


def scalar_system(gamma, D, b=0.0):
    return DriftSystem(
        A=np.array([[-gamma]], dtype=complex),
        b=np.array([b], dtype=complex),
        D=np.array([[D]]),
        pump_rate=np.zeros(1),
    )


def test_default_atom():
    assert ATOM.hyperfine_splitting == 8.145e8
    assert ATOM.intrinsic_decay == pytest.approx(33.333333)
    with pytest.raises(ParameterError):
        AtomParams(excited_linewidth=0)


def test_isolated_strong_pump_saturates_to_dark_state():
    g = build_region_graph(CellConfig(), [ChannelConfig("c1", 1e-3)])
    K0 = RateMatrix(K=np.zeros((2, 2)), volume_fraction=g.volume_fraction)
    s = steady_state(assemble_drift(g, K0, [1e7], [0.0], ATOM))
    assert s.coherence[1] == pytest.approx(1 + 0j, abs=1e-5)
    assert s.coherence[0] == 0


def test_pumps_off_gives_zero_drive_and_zero_state():
    g, K = graph_of(2)
    sysm = assemble_drift(g, K, [0.0, 0.0], [0.0, 0.0], ATOM)
    assert np.all(sysm.b == 0)
    assert np.all(steady_state(sysm).coherence == 0)


def test_drive_phase_is_twice_polarization_angle():
    g, K = graph_of(1)
    sysm = assemble_drift(g, K, [5e3], [2 * (np.pi / 2)], ATOM)
    assert sysm.b[1] == pytest.approx(-5e3 + 0j, abs=1e-9)


def test_drift_structure_and_stability():
    g, K = graph_of(3)
    sysm = assemble_drift(g, K, [1e3, 2e3, 0.0], [0, 1, 2], ATOM, noise_coeff=0.5)
    np.testing.assert_allclose(
        sysm.A.real, K.intensive() - np.diag(ATOM.intrinsic_decay + np.r_[0, 1e3, 2e3, 0])
    )
    assert np.all(sysm.eigenvalues().real < 0)
    np.testing.assert_allclose(np.diag(sysm.D), 0.5 * (ATOM.intrinsic_decay + np.r_[0, 1e3, 2e3, 0]))
    assert np.count_nonzero(sysm.D - np.diag(np.diag(sysm.D))) == 0


def test_symmetric_channels_share_the_same_coherence():
    g, K = graph_of(2)
    s = steady_state(assemble_drift(g, K, [4e3, 4e3], [0, 0], ATOM)).coherence
    assert abs(s[1] - s[2]) <= 1e-12 * abs(s[1])


def test_imported_coherence_matches_exact_rational_solve():
    # Ch1 unpumped, Ch2 pumped at 1e4 s^-1; exact oracle from sympy.
    g, K = graph_of(2)
    gp2 = 10_000
    s = steady_state(assemble_drift(g, K, [0.0, gp2], [0.0, 0.0], ATOM)).coherence

    f = [sympy.Rational(1) - 2 * sympy.Rational(36, 10000), sympy.Rational(36, 10000), sympy.Rational(36, 10000)]
    kout = sympy.Integer(200000)
    kin = f[1] / f[0] * kout
    G0 = sympy.Rational(100, 3)
    s0, s1, s2 = sympy.symbols("s0 s1 s2")
    eqs = [
        -(G0 + 2 * kin) * s0 + kin * s1 + kin * s2,
        kout * s0 - (G0 + kout) * s1,
        kout * s0 - (G0 + gp2 + kout) * s2 + gp2,
    ]
    sol = sympy.solve(eqs, [s0, s1, s2])
    exact = [float(sol[v]) for v in (s0, s1, s2)]
    np.testing.assert_allclose(s.real, exact, rtol=1e-12)
    np.testing.assert_allclose(s.imag, 0, atol=1e-15)
    assert s[1].real > 0
    # the unpumped channel follows the dark region to within G0 / kout
    assert s[1].real == pytest.approx(s[0].real, rel=2e-4)


def test_large_intrinsic_decay_kills_coherence():
    g, K = graph_of(2)
    atom = AtomParams(intrinsic_decay=1e12)
    s = steady_state(assemble_drift(g, K, [1e4, 1e4], [0, 0], atom)).coherence
    assert np.all(np.abs(s) < 1e-7)


def test_singular_drift_reports_condition():
    sysm = DriftSystem(A=np.zeros((2, 2), complex), b=np.ones(2, complex), D=np.eye(2), pump_rate=np.zeros(2))
    with pytest.raises(NumericalError, match="condition"):
        steady_state(sysm)


@settings(max_examples=200, deadline=None)
@given(
    rates=st.lists(st.floats(0.0, 1e6), min_size=1, max_size=5),
    angles=st.lists(st.floats(0, np.pi), min_size=5, max_size=5),
)
def test_steady_state_residual_and_bound(rates, angles):
    g, K = graph_of(len(rates))
    sysm = assemble_drift(g, K, rates, [2 * a for a in angles[: len(rates)]], ATOM)
    s = steady_state(sysm).coherence
    if np.linalg.norm(sysm.b) > 0:
        assert np.linalg.norm(sysm.A @ s + sysm.b) <= 1e-10 * np.linalg.norm(sysm.b)
    assert np.all(np.abs(s) <= 1 + 1e-9)


@pytest.mark.parametrize("n_other", [1, 2, 3])
@pytest.mark.parametrize("gp_new", [1e2, 3e3, 1e5])
@pytest.mark.parametrize("gp_old", [0.0, 1e3, 5e4])
def test_adding_a_pumped_channel_never_lowers_coherence(n_other, gp_new, gp_old):
    g_old, K_old = graph_of(n_other)
    g_new, K_new = graph_of(n_other + 1)
    old = steady_state(assemble_drift(g_old, K_old, [gp_old] * n_other, [0.0] * n_other, ATOM)).coherence
    new = steady_state(
        assemble_drift(g_new, K_new, [gp_old] * n_other + [gp_new], [0.0] * (n_other + 1), ATOM)
    ).coherence
    assert np.all(np.abs(new[: n_other + 1]) >= np.abs(old) - 1e-15)


def test_susceptibility_limits():
    g, K = graph_of(2)
    sysm = assemble_drift(g, K, [1e3, 2e3], [0, 0.3], ATOM)
    np.testing.assert_allclose(susceptibility(sysm, 0.0), -np.linalg.inv(sysm.A), rtol=1e-12)
    big = np.array([1e10, 1e11])
    norms = np.linalg.norm(susceptibility(sysm, big), axis=(1, 2), ord=2)
    np.testing.assert_allclose(norms * big, 1.0, rtol=1e-3)


def test_scalar_susceptibility_is_lorentzian():
    G = 250.0
    sysm = scalar_system(G, 3.0)
    w = np.array([0.0, 10.0, 250.0, 1e4])
    chi = susceptibility(sysm, w)[:, 0, 0]
    np.testing.assert_allclose(np.abs(chi) ** 2, 1 / (w**2 + G**2), rtol=1e-12)
    np.testing.assert_allclose(spin_noise_psd(sysm, w)[:, 0], 3.0 / (w**2 + G**2), rtol=1e-12)


def test_zero_diffusion_zero_psd():
    g, K = graph_of(2)
    sysm = assemble_drift(g, K, [1e3, 2e3], [0, 0], ATOM, noise_coeff=0.0)
    assert np.all(spin_noise_psd(sysm, np.array([1.0, 1e5])) == 0)


def test_psd_integral_matches_scalar_lyapunov_variance():
    G, D = 700.0, 2.5
    sysm = scalar_system(G, D)
    val, _ = integrate.quad(lambda w: spin_noise_psd(sysm, w)[0], -np.inf, np.inf, epsabs=0, epsrel=1e-10)
    assert val / (2 * np.pi) == pytest.approx(D / (2 * G), rel=1e-8)


def test_psd_integral_matches_lyapunov_multiregion():
    g, K = graph_of(2)
    sysm = assemble_drift(g, K, [2e3, 8e3], [0, 0.4], ATOM, noise_coeff=1.0)
    C = stationary_covariance(sysm)
    for i in range(3):
        # substitute w = tan(u) to integrate the heavy-tailed Lorentzian sum on a finite range
        f = lambda u: spin_noise_psd(sysm, np.tan(u))[i] / np.cos(u) ** 2
        edges = np.r_[np.arctan(np.r_[0, np.geomspace(1, 1e8, 17)]), np.pi / 2]
        val = 2 * sum(integrate.quad(f, a, b, epsrel=1e-11, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
        assert val / (2 * np.pi) == pytest.approx(C[i, i].real, rel=1e-6)


def test_langevin_deterministic_decay():
    G = 1000.0
    sysm = scalar_system(G, 0.0)
    dt = 1e-4 / G
    run = simulate_langevin(sysm, 3 / G, dt, seed=0, initial=np.array([0.7 + 0.2j]), record_every=1)
    k = np.argmin(np.abs(run.times - 3 / G))
    x0 = 0.7 + 0.2j
    # exact for the Euler recursion; first-order global error against the continuum
    assert run.series[0, k, 0] == pytest.approx(x0 * (1 - G * dt) ** k, rel=1e-10)
    assert run.series[0, k, 0] == pytest.approx(x0 * math.exp(-3), rel=3 * G * dt / 2 * 1.01)


def test_langevin_same_seed_is_bit_identical():
    g, K = graph_of(2)
    sysm = assemble_drift(g, K, [2e3, 8e3], [0, 0], ATOM, noise_coeff=1.0)
    dt = 0.05 / sysm.max_rate()
    a = simulate_langevin(sysm, 2000 * dt, dt, seed=7, n_trajectories=3, nperseg=256)
    b = simulate_langevin(sysm, 2000 * dt, dt, seed=7, n_trajectories=3, nperseg=256, batch=2)
    assert a.series.tobytes() == b.series.tobytes()
    assert a.psd.tobytes() == b.psd.tobytes()
    c = simulate_langevin(sysm, 2000 * dt, dt, seed=8, n_trajectories=3, nperseg=256)
    assert a.series.tobytes() != c.series.tobytes()


def test_langevin_rejects_large_step():
    sysm = scalar_system(1000.0, 1.0)
    with pytest.raises(ParameterError, match="time step"):
        simulate_langevin(sysm, 1.0, 1e-4, seed=0)


def test_scalar_langevin_psd_matches_lorentzian():
    G, D = 2000.0, 4.0
    sysm = scalar_system(G, D, b=1000.0)
    dt = 0.01 / G
    run = simulate_langevin(sysm, 0.4, dt, seed=11, n_trajectories=40, nperseg=4096, batch=40)
    f = np.array([20.0, 100.0, 300.0, 1000.0])
    mean, err = run.psd_at(f)
    expected = D / ((2 * np.pi * f) ** 2 + G**2)
    z = (mean[0] - expected) / err[0]
    assert np.max(np.abs(z)) <= 3.0
    # the mean follows the steady state b / G
    assert run.series[:, :, 0].mean().real == pytest.approx(0.5, abs=0.01)


def test_langevin_variance_matches_integrated_psd():
    G, D = 500.0, 2.0
    sysm = scalar_system(G, D)
    dt = 0.01 / G
    run = simulate_langevin(sysm, 0.2, dt, seed=3, n_trajectories=40, record_every=10)
    sample_var = np.mean(np.abs(run.series[:, :, 0]) ** 2)
    assert sample_var == pytest.approx(D / (2 * G), rel=0.05)
