"""The five reference experiments as scenario runs, plus the Monte Carlo cross-check.

Every runner takes a :class:`~flysq.config.RunConfig` (cell, atom, optics,
spectrum grid) and fixes the channel layout of its experiment.  Noise figures
are read at ``REF_FREQ`` unless stated otherwise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import ConfigError
from .geometry import ChannelConfig
from .model import ModelResult, evaluate
from .optics import NoiseSpectrum, to_decibel
from .parallel import pmap
from .spin import SpinState, assemble_drift, simulate_langevin, spin_noise_psd

REF_FREQ = 40e3  # Hz
MW = 1e-3
MHZ = 1e6

# operating points of the reference experiments
TWO_CHANNEL = dict(p1=4.5 * MW, p2=11.0 * MW, detuning=348 * MHZ)
DETUNING_SWEEP = dict(p1=5.0 * MW, p2=6.0 * MW)
POWER_SWEEP = dict(p2=6.0 * MW, detuning=(-56.0 - 814.5) * MHZ)  # -56 MHz from F'=1
POLARIZATION_SWEEP = dict(p1=4.5 * MW, p2=6.0 * MW, detuning=348 * MHZ)
ARRAY = dict(power=4.25 * MW, single_power=7.0 * MW, detuning=348 * MHZ, spacing=8e-3)


@dataclass
class ScenarioResult:
    scenario: str
    label: str  # run label, unique within a scenario
    observed: str  # channel whose noise is summarized
    spectra: dict  # channel id -> NoiseSpectrum
    state: Optional[SpinState]
    ref_freq: float = REF_FREQ
    summary: dict = field(default_factory=dict)

    @property
    def v_min_db(self) -> float:
        return self.summary["v_min_db"]


def _run(cfg: RunConfig, scenario: str, label: str, channels: Sequence[ChannelConfig],
         observed: str, freqs=None, **summary) -> ScenarioResult:
    """Evaluate one channel layout and summarize ``observed`` at the reference frequency."""
    freqs = cfg.spectrum.frequencies() if freqs is None else np.asarray(freqs, float)
    grid = np.union1d(freqs, [REF_FREQ])
    res: ModelResult = evaluate(
        cfg.cell, channels, cfg.atom, cfg.resolved_optics(), grid,
        mean_speed=cfg.mean_speed, shared_depumping=cfg.shared_depumping,
    )
    spectra = {cid: cr.spectrum for cid, cr in res.channels.items() if cr.spectrum is not None}
    obs = spectra.get(observed)
    if obs is None:
        v_ref = 1.0  # observed channel dark: nothing squeezed, report shot noise
    else:
        v_ref = float(obs.v_min[np.searchsorted(grid, REF_FREQ)])
    info = {"v_min": v_ref, "v_min_db": to_decibel(v_ref)}
    if obs is not None:
        info["g_dc"] = res.channels[observed].g_dc
    info.update(summary)
    return ScenarioResult(scenario, label, observed, spectra, res.state, REF_FREQ, info)


def _channel(cid, power, detuning, angle=0.0, position=(0.0, 0.0)) -> ChannelConfig:
    return ChannelConfig(id=cid, power=power, detuning=detuning,
                         polarization_angle=angle, position=position)


def run_two_channel(cfg: RunConfig) -> list[ScenarioResult]:
    """Ch1 and Ch2 each with the other beam off and on."""
    p = TWO_CHANNEL
    c1 = _channel("ch1", p["p1"], p["detuning"])
    c2 = _channel("ch2", p["p2"], p["detuning"])
    runs = [
        ("ch1_alone", [c1], "ch1"),
        ("ch1_with_ch2", [c1, c2], "ch1"),
        ("ch2_alone", [c2], "ch2"),
        ("ch2_with_ch1", [c1, c2], "ch2"),
    ]
    return [_run(cfg, "two_channel", lab, chs, obs) for lab, chs, obs in runs]


def _pair_sweep(cfg, scenario, values, make, key) -> list[ScenarioResult]:
    freqs = [REF_FREQ]

    def one(x):
        alone, together = make(x)
        a = _run(cfg, scenario, f"without_ch2@{x:.6g}", alone, "ch1", freqs, **{key: x, "ch2": False})
        b = _run(cfg, scenario, f"with_ch2@{x:.6g}", together, "ch1", freqs, **{key: x, "ch2": True})
        return a, b

    out = []
    for a, b in pmap(one, values):
        out += [a, b]
    return out


def run_detuning_sweep(cfg: RunConfig, detunings=None) -> list[ScenarioResult]:
    """Ch1 at 5 mW with and without a 6 mW Ch2, both beams at the same detuning."""
    if detunings is None:
        detunings = np.linspace(-1800, 1000, 281) * MHZ
    p = DETUNING_SWEEP

    def make(d):
        c1 = _channel("ch1", p["p1"], d)
        return [c1], [c1, _channel("ch2", p["p2"], d)]

    return _pair_sweep(cfg, "detuning_sweep", np.asarray(detunings, float), make, "detuning_hz")


def run_power_sweep(cfg: RunConfig, powers=None) -> list[ScenarioResult]:
    """Ch1 power scan with Ch2 fixed at 6 mW, -56 MHz from F'=1.

    P1 = 0 carries no light, so there is nothing to detect; such points are
    dropped.
    """
    if powers is None:
        powers = np.linspace(0.0, 15.0, 61) * MW
    powers = np.asarray(powers, float)
    powers = powers[powers > 0]
    p = POWER_SWEEP

    def make(P):
        c1 = _channel("ch1", P, p["detuning"])
        return [c1], [c1, _channel("ch2", p["p2"], p["detuning"])]

    return _pair_sweep(cfg, "power_sweep", powers, make, "power_w")


def run_polarization_sweep(cfg: RunConfig, angles=None) -> list[ScenarioResult]:
    """Ch1 noise reduction from a 6 mW Ch2 versus their relative polarization angle.

    ``summary["reduction_db"]`` is the Ch2-off level minus the Ch2-on level,
    so positive means Ch2 helps.
    """
    if angles is None:
        angles = np.radians(np.linspace(0, 90, 46))
    p = POLARIZATION_SWEEP
    c2 = _channel("ch2", p["p2"], p["detuning"], 0.0)

    def make(a):
        c1 = _channel("ch1", p["p1"], p["detuning"], a)
        return [c1], [c1, c2]

    runs = _pair_sweep(cfg, "polarization_sweep", np.asarray(angles, float), make, "angle_rad")
    for alone, both in zip(runs[::2], runs[1::2]):
        red = alone.v_min_db - both.v_min_db
        alone.summary["reduction_db"] = red
        both.summary["reduction_db"] = red
    return runs


def array_channels(power: float = ARRAY["power"], detuning: float = ARRAY["detuning"]) -> list[ChannelConfig]:
    """2x2 array A, B, C, D on an 8 mm square grid."""
    s = ARRAY["spacing"]
    pos = {"A": (0, 0), "B": (s, 0), "C": (0, s), "D": (s, s)}
    return [_channel(k, power, detuning, position=v) for k, v in pos.items()]


def run_array_sweep(cfg: RunConfig) -> list[ScenarioResult]:
    """Channel D with 0-3 of its neighbours on, plus a lone 7 mW reference beam."""
    A, B, C, D = array_channels()
    layouts = [[D], [C, D], [B, C, D], [A, B, C, D]]
    out = [
        _run(cfg, "array_sweep", f"{len(chs)}_channels", chs, "D", n_channels=len(chs))
        for chs in layouts
    ]
    single = _channel("D7", ARRAY["single_power"], ARRAY["detuning"])
    out.append(_run(cfg, "array_sweep", "single_7mW", [single], "D7", n_channels=1))
    return out


SCENARIOS = {
    "two_channel": run_two_channel,
    "detuning_sweep": run_detuning_sweep,
    "power_sweep": run_power_sweep,
    "polarization_sweep": run_polarization_sweep,
    "array_sweep": run_array_sweep,
}


def run_scenario(name: str, cfg: RunConfig) -> list[ScenarioResult]:
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise ConfigError(
            f"unknown scenario {name!r}; valid names: {', '.join(sorted(SCENARIOS))}"
        ) from None
    return fn(cfg)


# ---- Monte Carlo cross-check ---------------------------------------------------


@dataclass
class CrosscheckReport:
    freqs: np.ndarray  # Hz
    regions: tuple
    analytic: np.ndarray  # (regions, freqs)
    estimate: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    mean_z: np.ndarray  # per region, ensemble mean vs steady state
    n_trajectories: int
    seed: int
    dt: float
    runtime_s: float

    @property
    def max_abs_z(self) -> float:
        return float(np.nanmax(np.abs(self.z)))

    def passed(self, limit: float = 3.0) -> bool:
        return self.max_abs_z <= limit

    def as_dict(self) -> dict:
        return {
            "max_abs_z": self.max_abs_z,
            "mean_max_abs_z": float(np.max(np.abs(self.mean_z))),
            "n_trajectories": self.n_trajectories,
            "seed": self.seed,
            "dt": self.dt,
            "runtime_s": self.runtime_s,
            "freqs_hz": self.freqs.tolist(),
            "regions": list(self.regions),
        }


def crosscheck_system(cfg: RunConfig, channels: Optional[Sequence[ChannelConfig]] = None):
    """Drift system of the configured channels (default: the two-channel experiment)."""
    if channels is None:
        channels = list(cfg.channels) or [
            _channel("ch1", TWO_CHANNEL["p1"], TWO_CHANNEL["detuning"]),
            _channel("ch2", TWO_CHANNEL["p2"], TWO_CHANNEL["detuning"]),
        ]
    res = evaluate(cfg.cell, channels, cfg.atom, cfg.resolved_optics(), None,
                   mean_speed=cfg.mean_speed, shared_depumping=cfg.shared_depumping)
    return res.system


def mc_crosscheck(
    cfg: RunConfig,
    seed: int,
    *,
    n_trajectories: int = 200,
    system=None,
    freqs_hz=None,
    step_fraction: float = 0.02,
    duration: Optional[float] = None,
    nperseg: int = 8192,
) -> CrosscheckReport:
    """Compare the Welch spin-noise estimate of an Euler-Maruyama ensemble with spin_noise_psd.

    The default band starts 12 Welch bins above DC, clear of window leakage
    from the slow dark-region mode, and ends at 1.5x the fastest corner
    frequency; there the Euler bias (about step_fraction/2) stays well inside
    the statistical error.
    """
    t0 = time.perf_counter()
    sysm = crosscheck_system(cfg) if system is None else system
    lam = sysm.max_rate()
    dt = step_fraction / lam
    if duration is None:
        duration = 8 * nperseg * dt
    run = simulate_langevin(sysm, duration, dt, seed, n_trajectories=n_trajectories,
                            nperseg=nperseg, record_every=max(1, int(duration / dt) // 500))
    df = 1.0 / (nperseg * dt)
    if freqs_hz is None:
        f_lo = 12 * df
        freqs_hz = np.geomspace(f_lo, max(1.5 * lam / (2 * math.pi), 4 * f_lo), 12)
    freqs_hz = np.asarray(freqs_hz, float)
    est, err = run.psd_at(freqs_hz)
    ana = spin_noise_psd(sysm, 2 * np.pi * freqs_hz).T
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, (est - ana) / err, np.where(est == ana, 0.0, np.inf))
    traj_means = run.series.mean(axis=1)  # (traj, regions)
    mu = traj_means.mean(axis=0)
    se = traj_means.std(axis=0, ddof=1) / math.sqrt(n_trajectories) if n_trajectories > 1 else np.inf
    target = run.extra["steady"]
    # floor the error at roundoff so a noiseless ensemble compares as exact
    se = np.maximum(se, 1e3 * np.finfo(float).eps * max(float(np.max(np.abs(target))), 1e-300))
    mean_z = np.abs(mu - target) / se
    return CrosscheckReport(
        freqs=freqs_hz, regions=tuple(sysm.regions) or tuple(range(sysm.n)),
        analytic=ana, estimate=est, stderr=err, z=z, mean_z=mean_z,
        n_trajectories=n_trajectories, seed=seed, dt=dt,
        runtime_s=time.perf_counter() - t0,
    )
