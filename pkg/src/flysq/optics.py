"""From steady-state coherence to per-channel quadrature noise.

Squeezing is a single-mode Gaussian shear of the orthogonally polarized
vacuum (X, P) -> (X, P + 2 g X), followed by a beam-splitter loss and
additive excess noise.  Covariances are in shot-noise units (vacuum = I).

Detuning convention: the lineshape functions take the line detuning ``delta``
measured from the |1> -> |3> transition, which is the F=2 -> F'=1 line; the
second excited state (F'=2) sits at ``delta = hyperfine_splitting``.
Channel detunings are quoted from F'=2 and converted with
:func:`line_detuning`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .errors import DomainError, ParameterError
from .geometry import ChannelConfig
from .spin import AtomParams


@dataclass(frozen=True)
class OpticalParams:
    nonlinear_gain: float = 1.0  # C_nl, 1/W
    base_optical_depth: float = 1.0  # OD_0
    depump_sat_power: float = 5e-3  # P_dep, W
    pump_sat_power: float = 5e-3  # P_sat, W
    pump_coeff: float = 1e6  # c_p, s^-1 / W
    squeezing_cutoff: float = 2 * math.pi * 2e4  # omega_c, rad/s
    efficiency: float = 0.9  # eta
    tech_noise: float = 0.0  # a_tech, rad/s
    noise_coeff: float = 0.0  # c_D, Langevin fluctuation-dissipation constant

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"optics.{f.name} must be finite and >= 0, got {v!r}")
        for name in ("base_optical_depth", "depump_sat_power", "pump_sat_power", "squeezing_cutoff"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"optics.{name} must be positive")
        if not 0 < self.efficiency <= 1:
            raise ParameterError(f"optics.efficiency must lie in (0, 1], got {self.efficiency!r}")

    def replace(self, **changes) -> "OpticalParams":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return OpticalParams(**d)

    def as_dict(self) -> dict:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class QuadCovariance:
    V: np.ndarray

    def __post_init__(self):
        V = np.array(self.V, dtype=float)
        if V.shape != (2, 2):
            raise ParameterError(f"quadrature covariance must be 2x2, got {V.shape}")
        if abs(V[0, 1] - V[1, 0]) > 1e-12 * max(1.0, abs(V).max()):
            raise ParameterError("quadrature covariance must be symmetric")
        V[1, 0] = V[0, 1]
        if V[0, 0] <= 0 or np.linalg.det(V) < 1 - 1e-9:
            raise ParameterError(
                f"covariance violates the uncertainty relation (det = {np.linalg.det(V):.6g})"
            )
        V.setflags(write=False)
        object.__setattr__(self, "V", V)

    @property
    def det(self) -> float:
        return float(self.V[0, 0] * self.V[1, 1] - self.V[0, 1] ** 2)


@dataclass(frozen=True)
class NoiseSpectrum:
    frequencies: np.ndarray  # Hz
    v_min: np.ndarray
    v_max: np.ndarray
    angle_min: np.ndarray

    @property
    def v_min_db(self) -> np.ndarray:
        return to_decibel(self.v_min)

    def at(self, freq_hz: float) -> float:
        """v_min at the grid point closest to ``freq_hz``."""
        k = int(np.argmin(np.abs(np.log(self.frequencies / freq_hz))))
        return float(self.v_min[k])


def line_detuning(detuning_from_f2: float, atom: AtomParams) -> float:
    """Convert a detuning quoted from F=2 -> F'=2 into the line detuning."""
    return detuning_from_f2 + atom.hyperfine_splitting


def absorption_lineshape(delta, atom: AtomParams):
    """L(delta): sum of the two excited-state Lorentzians, peak value <= 2."""
    gam = atom.excited_linewidth
    d = np.asarray(delta, dtype=float)
    w = atom.cg_ratio**2
    return gam**2 / (d**2 + gam**2) + w * gam**2 / ((d - atom.hyperfine_splitting) ** 2 + gam**2)


def dispersive_lineshape(delta, atom: AtomParams):
    """Signed dispersion with opposite-sign contributions from the two excited states."""
    gam = atom.excited_linewidth
    d = np.asarray(delta, dtype=float)
    dd = d - atom.hyperfine_splitting
    w = atom.cg_ratio**2
    return d * gam / (d**2 + gam**2) - w * dd * gam / (dd**2 + gam**2)


def pump_rate(power, delta, opt: OpticalParams, atom: AtomParams):
    """Optical pumping rate (s^-1) with power saturation."""
    P = np.asarray(power, dtype=float)
    if np.any(P < 0):
        raise DomainError("laser power must be >= 0")
    return opt.pump_coeff * P * absorption_lineshape(delta, atom) / (1.0 + P / opt.pump_sat_power)


def depump_load(power, delta, opt: OpticalParams, atom: AtomParams):
    """Dimensionless depumping strength P L(delta) / P_dep of one beam."""
    return np.asarray(power, dtype=float) * absorption_lineshape(delta, atom) / opt.depump_sat_power


def coherence_projection(sigma, polarization_angle):
    """Projection of the local coherence onto the channel's own dark state, floored at 0."""
    return np.maximum(0.0, np.real(np.asarray(sigma) * np.exp(-2j * np.asarray(polarization_angle))))


def shear_coupling(channel: ChannelConfig, opt: OpticalParams, atom: AtomParams,
                   depumped: Optional[float] = None) -> float:
    """dg/d(projection): the shear per unit aligned coherence."""
    delta = line_detuning(channel.detuning, atom)
    if depumped is None:
        od = opt.base_optical_depth / (1.0 + depump_load(channel.power, delta, opt, atom))
    else:
        od = opt.base_optical_depth * (1.0 - depumped)
    return float(opt.nonlinear_gain * channel.power * od * abs(dispersive_lineshape(delta, atom)))


def shear_parameter(channel: ChannelConfig, sigma: complex, opt: OpticalParams,
                    atom: AtomParams, depumped: Optional[float] = None) -> float:
    """Self-rotation shear g of one channel.

    ``depumped`` is the fraction of atoms lost to the other hyperfine ground
    state in this channel's region.  When omitted, the beam's own depumping
    sets the effective optical depth, OD_0 / (1 + P L / P_dep).
    """
    if not channel.enabled:
        raise ParameterError(f"channel {channel.id!r} is disabled")
    proj = float(coherence_projection(sigma, channel.polarization_angle))
    return shear_coupling(channel, opt, atom, depumped) * proj


def shear_covariance(g: float) -> QuadCovariance:
    if g < 0:
        raise DomainError(f"shear parameter must be >= 0, got {g!r}")
    return QuadCovariance(np.array([[1.0, 2 * g], [2 * g, 1.0 + 4 * g * g]]))


def apply_loss(V: QuadCovariance, eta: float) -> QuadCovariance:
    if not 0 < eta <= 1:
        raise ParameterError(f"efficiency must lie in (0, 1], got {eta!r}")
    return QuadCovariance(eta * V.V + (1 - eta) * np.eye(2))


def split_squeezed(V: QuadCovariance, n_ways: int) -> QuadCovariance:
    """Covariance of each output port of a balanced n-way beam splitter.

    The other n - 1 input ports carry vacuum.
    """
    if int(n_ways) != n_ways or n_ways < 2:
        raise ParameterError(f"split needs an integer n >= 2, got {n_ways!r}")
    return QuadCovariance(V.V / n_ways + (1 - 1 / n_ways) * np.eye(2))


def _eig2(a, c, d):
    """Eigenvalues and minor-axis angle of [[a, c], [c, d]], vectorized."""
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), c)
    hi = mean + rad
    # det / hi avoids the cancellation in mean - rad when squeezing is strong
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(hi > 0, (a * d - c * c) / hi, mean - rad)
    scale = np.maximum(np.abs(a) + np.abs(d), 1.0)
    tie = rad <= 1e-12 * scale
    angle = np.mod(0.5 * np.arctan2(-2 * c, d - a), np.pi)
    angle = np.where(tie, 0.0, angle)
    # arctan2 can land exactly on pi after the modulo
    angle = np.where(angle >= np.pi, 0.0, angle)
    return lo, hi, angle


def min_variance(V: QuadCovariance) -> tuple[float, float, float]:
    """(v_min, v_max, angle of the minor axis in [0, pi))."""
    lo, hi, ang = _eig2(V.V[0, 0], V.V[0, 1], V.V[1, 1])
    return float(lo), float(hi), float(ang)


def pure_shear_min_variance(g):
    """Closed form 1 + 2g^2 - 2g sqrt(1 + g^2), written to avoid cancellation."""
    g = np.asarray(g, dtype=float)
    return 1.0 / (1.0 + 2 * g * g + 2 * g * np.sqrt(1 + g * g))


def to_decibel(v):
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise DomainError("noise power must be positive to convert to dB")
    out = 10.0 * np.log10(v)
    return float(out) if out.ndim == 0 else out


def from_decibel(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def noise_spectrum(
    channel: ChannelConfig,
    g_dc: float,
    coupling: float,
    spin_psd,
    opt: OpticalParams,
    freqs_hz,
) -> NoiseSpectrum:
    """Minimum-variance spectrum of one channel.

    ``g_dc`` is the low-frequency shear, ``coupling`` the derivative of g with
    respect to the aligned coherence and ``spin_psd`` the channel region's
    spin-noise PSD sampled on ``freqs_hz``.  Both excess terms (mapped spin
    noise and 1/omega technical noise) are added to both quadratures.
    """
    f = np.asarray(freqs_hz, dtype=float)
    if f.ndim != 1 or len(f) == 0:
        raise ParameterError("frequency grid must be a non-empty 1-D array")
    if np.any(f <= 0):
        raise ParameterError("spectrum grid must exclude DC (all frequencies > 0)")
    if channel.power <= 0:
        raise ParameterError(f"channel {channel.id!r} carries no light, no homodyne signal")
    w = 2 * np.pi * f
    g = g_dc / np.sqrt(1.0 + (w / opt.squeezing_cutoff) ** 2)
    eta = opt.efficiency
    excess = coupling**2 * np.asarray(spin_psd, dtype=float) + opt.tech_noise / w
    a = eta * 1.0 + (1 - eta) + excess
    c = eta * 2 * g
    d = eta * (1.0 + 4 * g * g) + (1 - eta) + excess
    lo, hi, ang = _eig2(a, c, d)
    return NoiseSpectrum(frequencies=f, v_min=lo, v_max=hi, angle_min=ang)
