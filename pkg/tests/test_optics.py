import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flysq.errors import DomainError, ParameterError
from flysq.geometry import ChannelConfig
from flysq.optics import (
    OpticalParams,
    QuadCovariance,
    absorption_lineshape,
    apply_loss,
    coherence_projection,
    dispersive_lineshape,
    line_detuning,
    min_variance,
    noise_spectrum,
    pump_rate,
    pure_shear_min_variance,
    shear_covariance,
    shear_parameter,
    split_squeezed,
    to_decibel,
)
from flysq.spin import AtomParams

ATOM = AtomParams()
OPT = OpticalParams(nonlinear_gain=20.0, pump_coeff=3e7, efficiency=0.8)
DELTA = ATOM.hyperfine_splitting
GAMMA = ATOM.excited_linewidth


def rotated(V, phi):
    R = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    return QuadCovariance(R @ V.V @ R.T)


# ---- lineshapes and pumping ------------------------------------------------


def test_pump_rate_zero_power():
    assert pump_rate(0.0, 1e8, OPT, ATOM) == 0.0


def test_pump_rate_saturates():
    d = 3e8
    limit = OPT.pump_coeff * OPT.pump_sat_power * absorption_lineshape(d, ATOM)
    assert pump_rate(1e6, d, OPT, ATOM) == pytest.approx(limit, rel=1e-6)
    with pytest.raises(DomainError):
        pump_rate(-1.0, d, OPT, ATOM)


@pytest.mark.parametrize("d", [-2e9, -3e8, 0.0, 1.234e8, DELTA / 2, 7e8, 3e9])
def test_absorption_symmetric_about_midpoint(d):
    assert absorption_lineshape(d, ATOM) == pytest.approx(absorption_lineshape(DELTA - d, ATOM), rel=1e-12)
    assert 0 < absorption_lineshape(d, ATOM) <= 2


def test_dispersion_values():
    # both terms positive halfway between the excited states
    d = DELTA / 2
    t1 = d * GAMMA / (d**2 + GAMMA**2)
    t2 = -(d - DELTA) * GAMMA / ((d - DELTA) ** 2 + GAMMA**2)
    assert t1 > 0 and t2 > 0
    assert dispersive_lineshape(d, ATOM) == pytest.approx(t1 + t2)
    assert dispersive_lineshape(0.0, ATOM) == pytest.approx(DELTA * GAMMA / (DELTA**2 + GAMMA**2), rel=1e-12)
    assert abs(dispersive_lineshape(1e15, ATOM)) < 1e-12
    assert abs(dispersive_lineshape(-1e15, ATOM)) < 1e-12


def test_line_detuning_puts_f2_at_splitting():
    assert line_detuning(0.0, ATOM) == DELTA
    assert line_detuning(-DELTA, ATOM) == 0.0


# ---- shear -------------------------------------------------------------------


def test_shear_zero_coherence():
    ch = ChannelConfig("c", 5e-3, detuning=348e6)
    assert shear_parameter(ch, 0j, OPT, ATOM) == 0.0


def test_shear_aligned_coherence_is_maximal():
    ch = ChannelConfig("c", 5e-3, detuning=348e6, polarization_angle=0.3)
    best = shear_parameter(ch, np.exp(0.6j), OPT, ATOM)
    assert best > 0
    for phase in np.linspace(0, 2 * np.pi, 37):
        assert shear_parameter(ch, np.exp(1j * phase), OPT, ATOM) <= best + 1e-15


def test_shear_vanishes_at_45_degrees():
    ch = ChannelConfig("c", 5e-3, detuning=348e6, polarization_angle=0.0)
    sigma_from_other = np.exp(2j * math.radians(45))
    assert shear_parameter(ch, sigma_from_other, OPT, ATOM) == pytest.approx(0.0, abs=1e-15)


def test_shear_formula_own_depumping():
    ch = ChannelConfig("c", 5e-3, detuning=348e6)
    d = line_detuning(ch.detuning, ATOM)
    od = OPT.base_optical_depth / (1 + 5e-3 * absorption_lineshape(d, ATOM) / OPT.depump_sat_power)
    expect = OPT.nonlinear_gain * 5e-3 * od * abs(dispersive_lineshape(d, ATOM)) * 0.5
    assert shear_parameter(ch, 0.5, OPT, ATOM) == pytest.approx(expect, rel=1e-12)
    # with an explicit depumped fraction
    expect2 = OPT.nonlinear_gain * 5e-3 * 0.7 * abs(dispersive_lineshape(d, ATOM)) * 0.5
    assert shear_parameter(ch, 0.5, OPT, ATOM, depumped=0.3) == pytest.approx(expect2, rel=1e-12)


@given(st.floats(-np.pi, np.pi), st.floats(0, np.pi))
def test_projection_depends_on_relative_angle_only(dtheta, theta2):
    sigma = np.exp(2j * theta2)
    p = coherence_projection(sigma, theta2 + dtheta)
    assert p == pytest.approx(max(0.0, math.cos(2 * dtheta)), abs=1e-12)
    assert p == pytest.approx(coherence_projection(sigma, theta2 - dtheta), abs=1e-12)
    assert p == pytest.approx(coherence_projection(sigma, theta2 + dtheta + np.pi), abs=1e-12)


# ---- Gaussian algebra -------------------------------------------------------


def test_shear_covariance_identity_at_zero():
    np.testing.assert_array_equal(shear_covariance(0.0).V, np.eye(2))


def test_shear_g1_eigenvalues():
    # oracle: numeric eigensolve of [[1, 2], [2, 5]]
    ev = np.linalg.eigvalsh(np.array([[1.0, 2.0], [2.0, 5.0]]))
    lo, hi, _ = min_variance(shear_covariance(1.0))
    assert lo == pytest.approx(ev[0], rel=1e-12)
    assert hi == pytest.approx(ev[1], rel=1e-12)
    assert lo == pytest.approx(3 - 2 * math.sqrt(2), rel=1e-12)
    assert lo == pytest.approx(0.1716, abs=1e-4)


@pytest.mark.parametrize("g", np.linspace(0, 10, 41))
def test_shear_is_symplectic(g):
    V = shear_covariance(g)
    assert V.det == pytest.approx(1.0, abs=1e-12 * max(1, (1 + 4 * g * g)))
    lo, hi, _ = min_variance(V)
    assert lo * hi == pytest.approx(1.0, rel=1e-9)
    assert lo == pytest.approx(pure_shear_min_variance(g), rel=1e-9)


def test_negative_shear_rejected():
    with pytest.raises(DomainError):
        shear_covariance(-0.1)


def test_apply_loss_examples():
    V = shear_covariance(0.7)
    np.testing.assert_array_equal(apply_loss(V, 1.0).V, V.V)
    half = QuadCovariance(np.diag([0.5, 2.0]))
    assert apply_loss(half, 0.5).V[0, 0] == pytest.approx(0.75)
    for eta in (0.0, 1.5, -0.2):
        with pytest.raises(ParameterError):
            apply_loss(V, eta)


@settings(max_examples=200)
@given(g=st.floats(0, 10), eta=st.floats(0.01, 1.0))
def test_loss_preserves_uncertainty_and_squeezing_sign(g, eta):
    V = shear_covariance(g)
    lo, hi, _ = min_variance(apply_loss(V, eta))
    assert lo * hi >= 1 - 1e-9
    if g > 1e-6:
        assert lo < 1


def test_min_variance_monotone_in_g():
    gs = np.linspace(0, 10, 201)
    lo = np.array([min_variance(shear_covariance(g))[0] for g in gs])
    hi = np.array([min_variance(shear_covariance(g))[1] for g in gs])
    assert np.all(np.diff(lo) < 0) and np.all(np.diff(hi) > 0)


def test_split_example():
    V = QuadCovariance(np.diag([0.708, 1 / 0.708]))
    out = split_squeezed(V, 2)
    assert out.V[0, 0] == pytest.approx(0.854, abs=1e-12)
    assert to_decibel(0.708) == pytest.approx(-1.5, abs=0.002)
    assert to_decibel(0.854) == pytest.approx(-0.686, abs=0.001)


def test_split_limits():
    V = shear_covariance(1.0)
    np.testing.assert_allclose(split_squeezed(V, 10**9).V, np.eye(2), atol=1e-8)
    np.testing.assert_array_equal(split_squeezed(QuadCovariance(np.eye(2)), 3).V, np.eye(2))
    with pytest.raises(ParameterError):
        split_squeezed(V, 1)


@given(g=st.floats(0, 10), n=st.integers(2, 64))
def test_split_never_improves_squeezing(g, n):
    V = shear_covariance(g)
    assert min_variance(split_squeezed(V, n))[0] >= min_variance(V)[0] - 1e-12


def test_min_variance_tie_break_and_rotation():
    assert min_variance(QuadCovariance(np.eye(2))) == (1.0, 1.0, 0.0)
    V = shear_covariance(1.0)
    lo, hi, ang = min_variance(V)
    for phi in (0.2, 1.0, 2.5, -0.7):
        lo2, hi2, ang2 = min_variance(rotated(V, phi))
        assert lo2 == pytest.approx(lo, rel=1e-12)
        d = (ang2 - ang - phi) % np.pi
        assert min(d, np.pi - d) == pytest.approx(0.0, abs=1e-9)
        assert 0 <= ang2 < np.pi


def test_to_decibel():
    assert to_decibel(1.0) == 0.0
    assert to_decibel(0.901) == pytest.approx(-0.45, abs=0.005)
    assert to_decibel(0.841) == pytest.approx(-0.75, abs=0.005)
    for bad in (0.0, -1.0):
        with pytest.raises(DomainError):
            to_decibel(bad)


# ---- spectrum ----------------------------------------------------------------


def spectrum(g_dc, opt, freqs, spin=None, coupling=0.0):
    ch = ChannelConfig("c", 5e-3)
    spin = np.zeros(len(freqs)) if spin is None else spin
    return noise_spectrum(ch, g_dc, coupling, spin, opt, np.asarray(freqs, float))


def test_spectrum_low_frequency_plateau():
    opt = OpticalParams(efficiency=1.0, squeezing_cutoff=2 * np.pi * 1e5)
    s = spectrum(0.4, opt, [1.0, 10.0])
    assert s.v_min[0] == pytest.approx(pure_shear_min_variance(0.4), rel=1e-8)


def test_spectrum_at_cutoff():
    opt = OpticalParams(efficiency=1.0, squeezing_cutoff=2 * np.pi * 3e4)
    s = spectrum(0.4, opt, [3e4])
    assert s.v_min[0] == pytest.approx(pure_shear_min_variance(0.4 / math.sqrt(2)), rel=1e-10)


def test_spectrum_tends_to_shot_noise():
    opt = OpticalParams(efficiency=0.7, tech_noise=1e4)
    f = np.array([1e9, 1e11])
    s = spectrum(0.4, opt, f, spin=1e-3 / (2 * np.pi * f) ** 2, coupling=0.3)
    np.testing.assert_allclose(s.v_min, 1.0, atol=1e-5)


def test_spectrum_rejects_dc():
    with pytest.raises(ParameterError, match="DC"):
        spectrum(0.1, OPT, [0.0, 1e3])
    with pytest.raises(ParameterError):
        noise_spectrum(ChannelConfig("c", 0.0), 0.1, 0.0, [0.0], OPT, [1e3])


def test_spectrum_monotone_without_excess():
    f = np.geomspace(1e2, 1e7, 200)
    s = spectrum(0.8, OPT, f)
    assert np.all(np.diff(s.v_min) >= 0)
    assert np.all(s.v_min <= s.v_max) and np.all(s.v_min > 0)


def test_excess_noise_raises_both_quadratures():
    f = np.array([1e4, 4e4])
    base = spectrum(0.3, OPT, f)
    noisy = spectrum(0.3, OPT.replace(tech_noise=2e3), f)
    np.testing.assert_allclose(noisy.v_min - base.v_min, 2e3 / (2 * np.pi * f), rtol=1e-9)
