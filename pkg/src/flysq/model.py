"""Evaluate the full multi-channel model for one configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError
from .geometry import (
    DEFAULT_MEAN_SPEED,
    CellConfig,
    ChannelConfig,
    RegionGraph,
    build_region_graph,
    exchange_matrix,
)
from .optics import (
    NoiseSpectrum,
    OpticalParams,
    absorption_lineshape,
    coherence_projection,
    depump_load,
    dispersive_lineshape,
    line_detuning,
    noise_spectrum,
    pump_rate,
    shear_coupling,
)
from .spin import AtomParams, DriftSystem, SpinState, assemble_drift, spin_noise_psd, steady_state


@dataclass
class ChannelResult:
    id: str
    g_dc: float
    coupling: float
    projection: float
    depumped: float
    spectrum: Optional[NoiseSpectrum]


@dataclass
class ModelResult:
    graph: RegionGraph
    system: DriftSystem
    state: SpinState
    depumped: np.ndarray
    channels: dict = field(default_factory=dict)

    def v_min(self, channel_id: str, freq_hz: float) -> float:
        return self.channels[channel_id].spectrum.at(freq_hz)


def depumped_fraction(graph, K, channels, opt: OpticalParams, atom: AtomParams) -> np.ndarray:
    """Per-region fraction of atoms lost to the other hyperfine ground state.

    The lost population relaxes at the intrinsic rate and is exchanged between
    regions exactly like the coherence, so every beam depumps the whole cell.
    An isolated region reduces to n = x / (1 + x) with x = P L / P_dep.
    """
    loads = np.array(
        [depump_load(ch.power, line_detuning(ch.detuning, atom), opt, atom) for ch in channels]
    )
    if len(loads) == 0:
        return np.zeros(graph.n_regions)
    rates = atom.intrinsic_decay * loads
    sysd = assemble_drift(graph, K, rates, np.zeros(len(loads)), atom, 0.0)
    return steady_state(sysd).coherence.real


def evaluate(
    cell: CellConfig,
    channels: Sequence[ChannelConfig],
    atom: AtomParams,
    opt: OpticalParams,
    freqs_hz=None,
    *,
    mean_speed: float = DEFAULT_MEAN_SPEED,
    shared_depumping: bool = True,
) -> ModelResult:
    graph = build_region_graph(cell, channels, mean_speed)
    K = exchange_matrix(graph)
    active = graph.channels
    deltas = [line_detuning(ch.detuning, atom) for ch in active]
    rates = [float(pump_rate(ch.power, d, opt, atom)) for ch, d in zip(active, deltas)]
    phases = [2.0 * ch.polarization_angle for ch in active]
    sysm = assemble_drift(graph, K, rates, phases, atom, opt.noise_coeff)
    state = steady_state(sysm)
    if shared_depumping:
        depumped = depumped_fraction(graph, K, active, opt, atom)
    else:
        depumped = np.full(graph.n_regions, np.nan)

    psd = None
    if freqs_hz is not None:
        freqs_hz = np.asarray(freqs_hz, dtype=float)
        if np.any(freqs_hz <= 0):
            raise ParameterError("spectrum grid must exclude DC (all frequencies > 0)")
        psd = spin_noise_psd(sysm, 2 * np.pi * freqs_hz)

    result = ModelResult(graph=graph, system=sysm, state=state, depumped=depumped)
    for i, ch in enumerate(active, start=1):
        n_i = float(depumped[i]) if shared_depumping else None
        kappa = shear_coupling(ch, opt, atom, n_i)
        proj = float(coherence_projection(state.coherence[i], ch.polarization_angle))
        spec = None
        if psd is not None and ch.power > 0:
            spec = noise_spectrum(ch, kappa * proj, kappa, psd[:, i], opt, freqs_hz)
        result.channels[ch.id] = ChannelResult(
            id=ch.id,
            g_dc=kappa * proj,
            coupling=kappa,
            projection=proj,
            depumped=float(depumped[i]) if shared_depumping else float("nan"),
            spectrum=spec,
        )
    return result


def single_channel_vmin(
    powers,
    detunings,
    freq_hz: float,
    cell: CellConfig,
    atom: AtomParams,
    opt: OpticalParams,
    *,
    beam_diameter: float = 1.5e-3,
    mean_speed: float = DEFAULT_MEAN_SPEED,
    shared_depumping: bool = True,
) -> np.ndarray:
    """v_min of a lone channel on a broadcast grid of powers (W) and detunings (Hz from F'=2).

    Closed-form two-region version of :func:`evaluate`, used for dense scans.
    """
    P, det = np.broadcast_arrays(np.asarray(powers, float), np.asarray(detunings, float))
    f1 = (beam_diameter / cell.diameter) ** 2
    f0 = 1.0 - f1
    k_out = mean_speed / beam_diameter
    k_in = f1 / f0 * k_out
    G0 = atom.intrinsic_decay
    delta = det + atom.hyperfine_splitting
    gp = pump_rate(P, delta, opt, atom)
    # reservoir feedback: effective extra loss seen by the channel
    leak = k_out - k_out * k_in / (G0 + k_in)
    sigma = gp / (G0 + gp + leak)
    if shared_depumping:
        R = G0 * depump_load(P, delta, opt, atom)
        od = opt.base_optical_depth * (1.0 - R / (G0 + R + leak))
    else:
        od = opt.base_optical_depth / (1.0 + depump_load(P, delta, opt, atom))
    kappa = opt.nonlinear_gain * P * od * np.abs(dispersive_lineshape(delta, atom))
    w = 2 * np.pi * freq_hz
    a00, a01, a10, a11 = -(G0 + k_in), k_in, k_out, -(G0 + gp + k_out)
    det_m = (1j * w - a00) * (1j * w - a11) - a01 * a10
    D0 = opt.noise_coeff * G0
    D1 = opt.noise_coeff * (G0 + gp)
    S1 = (a10**2 * D0 + np.abs(1j * w - a00) ** 2 * D1) / np.abs(det_m) ** 2
    g = kappa * sigma / np.sqrt(1.0 + (w / opt.squeezing_cutoff) ** 2)
    eta = opt.efficiency
    excess = kappa**2 * S1 + opt.tech_noise / w
    a = 1.0 + excess
    c = eta * 2 * g
    d = 1.0 + eta * 4 * g * g + excess
    lo = 0.5 * (a + d) - np.hypot(0.5 * (a - d), c)
    return np.where(P > 0, lo, np.nan)
