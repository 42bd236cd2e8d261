"""Ground-state coherence dynamics across the cell regions.

Each region carries one complex coherence (the Delta m = 2 Zeeman coherence,
normalized so that |sigma| = 1 is the fully pumped dark state).  The regions
obey the linear Langevin system

    d sigma/dt = A sigma + b + F(t),   <F_i(t) F_j*(t')> = D_ij delta(t - t')

with A = -diag(G0 + Gp_i) + M, where M is the intensive form of the exchange
matrix (rows sum to zero), and b_i = Gp_i exp(2i theta_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg, signal

from .errors import NumericalError, ParameterError
from .geometry import RateMatrix, RegionGraph

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class AtomParams:
    """Level-scheme constants of the 87Rb D1 line.

    ``excited_linewidth`` is used as an effective (possibly Doppler-inflated)
    width in the same frequency unit as the detuning.
    """

    hyperfine_splitting: float = 8.145e8  # Hz, F'=1 <-> F'=2
    excited_linewidth: float = 2 * math.pi * 5.75e6
    cg_ratio: float = 1.0  # g1/g2
    intrinsic_decay: float = 1.0 / 0.030  # s^-1

    def __post_init__(self):
        for name in ("hyperfine_splitting", "excited_linewidth", "cg_ratio", "intrinsic_decay"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"atom.{name} must be positive, got {getattr(self, name)!r}")


@dataclass(frozen=True)
class SpinState:
    coherence: np.ndarray  # complex, per region
    pump_rate: np.ndarray  # s^-1, per region (0 for the dark region)


@dataclass(frozen=True)
class DriftSystem:
    A: np.ndarray
    b: np.ndarray
    D: np.ndarray
    pump_rate: np.ndarray
    regions: tuple = ()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def max_rate(self) -> float:
        return float(np.max(np.abs(self.eigenvalues())))


def assemble_drift(
    graph: RegionGraph,
    K: RateMatrix,
    pump_rates: Sequence[float],
    pump_phases: Sequence[float],
    atom: AtomParams,
    noise_coeff: float = 1.0,
) -> DriftSystem:
    """Build (A, b, D) for the coupled regions.

    ``pump_rates`` and ``pump_phases`` are per channel (region 1..N); the
    phases are twice the polarization angles.  ``noise_coeff`` is the
    fluctuation-dissipation constant c_D in D_ii = c_D (G0 + Gp_i).
    """
    n = graph.n_regions
    gp = np.zeros(n)
    gp[1:] = np.asarray(pump_rates, dtype=float)
    if gp.shape != (n,) or len(pump_phases) != n - 1:
        raise ParameterError(f"expected {n - 1} pump rates and phases")
    if np.any(gp < 0):
        raise ParameterError(f"pump rates must be >= 0, got {gp[1:].tolist()}")
    if noise_coeff < 0:
        raise ParameterError(f"noise coefficient must be >= 0, got {noise_coeff!r}")

    decay = atom.intrinsic_decay + gp
    A = K.intensive() - np.diag(decay)
    A = A.astype(complex)
    b = np.zeros(n, dtype=complex)
    b[1:] = gp[1:] * np.exp(1j * np.asarray(pump_phases, dtype=float))
    D = np.diag(noise_coeff * decay)

    sysm = DriftSystem(A=A, b=b, D=D, pump_rate=gp, regions=graph.regions)
    worst = float(np.max(sysm.eigenvalues().real))
    assert worst < 0, f"drift matrix is not stable (max Re eigenvalue {worst})"
    return sysm


def steady_state(sys: DriftSystem) -> SpinState:
    cond = np.linalg.cond(sys.A)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NumericalError("drift matrix is singular", cond)
    try:
        sigma = linalg.solve(sys.A, -sys.b, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("drift matrix is singular", cond) from exc
    bnorm = np.linalg.norm(sys.b)
    if bnorm > 0:
        resid = np.linalg.norm(sys.A @ sigma + sys.b) / bnorm
        if resid > 1e-10:
            raise NumericalError(
                f"steady-state residual {resid:.2e} exceeds 1e-10", np.linalg.cond(sys.A)
            )
    return SpinState(coherence=sigma, pump_rate=sys.pump_rate.copy())



def susceptibility(sys: DriftSystem, omega) -> np.ndarray:
    """chi(omega) = (i omega I - A)^-1; vectorized over an array of omega."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    eye = np.eye(sys.n)
    M = 1j * w[:, None, None] * eye - sys.A[None, :, :]
    cond = np.linalg.cond(M)
    if np.any(~np.isfinite(cond)) or np.any(cond > _COND_LIMIT):
        raise NumericalError("i*omega*I - A is near singular", float(np.nanmax(cond)))
    chi = np.linalg.inv(M)
    return chi[0] if np.ndim(omega) == 0 else chi


def spin_noise_psd(sys: DriftSystem, omega) -> np.ndarray:
    """Per-region spin-noise PSD [chi D chi^dagger]_ii.

    Returns shape (n_regions,) for scalar omega, else (len(omega), n_regions).
    """
    chi = susceptibility(sys, np.atleast_1d(omega))
    d = np.diag(sys.D).real
    S = np.einsum("wik,k->wi", np.abs(chi) ** 2, d)
    return S[0] if np.ndim(omega) == 0 else S


def stationary_covariance(sys: DriftSystem) -> np.ndarray:
    """Solves A C + C A^dagger + D = 0 (covariance of sigma, complex Hermitian)."""
    return linalg.solve_continuous_lyapunov(sys.A, -sys.D.astype(complex))


@dataclass
class LangevinRun:
    times: np.ndarray  # decimated sample times, s
    series: np.ndarray  # (n_trajectories, n_times, n_regions), complex
    freqs: np.ndarray  # Hz, two-sided Welch grid (fftshifted)
    psd: np.ndarray  # (n_regions, n_freqs) trajectory-mean estimate, 1/Hz
    psd_stderr: np.ndarray  # standard error of the mean over trajectories
    n_trajectories: int = 1
    dt: float = 0.0
    extra: dict = field(default_factory=dict)

    def psd_at(self, freq_hz) -> tuple[np.ndarray, np.ndarray]:
        """Interpolate mean PSD and its standard error onto ``freq_hz``."""
        f = np.atleast_1d(freq_hz)
        mean = np.array([np.interp(f, self.freqs, p) for p in self.psd])
        err = np.array([np.interp(f, self.freqs, e) for e in self.psd_stderr])
        return mean, err


def simulate_langevin(
    sys: DriftSystem,
    duration: float,
    dt: float,
    seed: int,
    *,
    n_trajectories: int = 1,
    initial: Union[str, np.ndarray, None] = "stationary",
    nperseg: Optional[int] = None,
    record_every: Optional[int] = None,
    batch: int = 25,
) -> LangevinRun:
    """Euler-Maruyama ensemble for d sigma = (A sigma + b) dt + sqrt(D) dW.

    Each trajectory k draws from its own generator spawned from
    ``SeedSequence(seed)``, so the result depends only on (seed, k) and not on
    the batching.  ``initial`` is an explicit state, ``"steady"`` (the mean)
    or ``"stationary"`` (a draw from the stationary Gaussian).

    The Welch estimate uses the fluctuation about the analytic mean without
    detrending; frequencies are two-sided because sigma is complex.
    """
    max_rate = sys.max_rate()
    if not dt > 0 or not duration > dt:
        raise ParameterError(f"need 0 < dt < duration (dt={dt!r}, duration={duration!r})")
    if dt >= 0.1 / max_rate:
        raise ParameterError(
            f"time step {dt:.3e} s is too large; need dt < 0.1/max|eig(A)| = {0.1 / max_rate:.3e} s"
        )
    n_steps = int(round(duration / dt))
    n = sys.n
    mean = steady_state(sys).coherence
    if nperseg is None:
        nperseg = min(n_steps, 1024)
    if record_every is None:
        record_every = max(1, n_steps // 2000)

    noise_amp = np.sqrt(np.diag(sys.D).real * dt / 2.0)
    x0 = mean
    chol = None
    if isinstance(initial, str) or initial is None:
        if initial == "stationary":
            C = stationary_covariance(sys)
            w, V = np.linalg.eigh(0.5 * (C + C.conj().T))
            chol = V * np.sqrt(np.clip(w.real, 0, None))
        elif initial not in (None, "steady"):
            raise ParameterError(f"unknown initial condition {initial!r}")
    else:
        x0 = np.asarray(initial, dtype=complex)
        if x0.shape != (n,):
            raise ParameterError(f"initial state must have shape ({n},)")

    step = np.eye(n) + sys.A * dt  # x_{k+1} = step @ x_k + b dt + noise
    cols = [step[:, k].copy() for k in range(n)]
    bdt = sys.b * dt
    children = np.random.SeedSequence(seed).spawn(n_trajectories)
    fs = 1.0 / dt

    rec_idx = np.arange(0, n_steps + 1, record_every)
    series = np.empty((n_trajectories, len(rec_idx), n), dtype=complex)
    psds = None
    freqs = None

    for start in range(0, n_trajectories, batch):
        ids = range(start, min(start + batch, n_trajectories))
        rngs = [np.random.default_rng(children[k]) for k in ids]
        m = len(rngs)
        x = np.empty((m, n), dtype=complex)
        for j, rng in enumerate(rngs):
            x[j] = x0
            if chol is not None:
                # circular complex Gaussian with E[z z^H] = C
                z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
                x[j] += chol @ z
        traj = np.empty((m, n_steps + 1, n), dtype=complex)
        traj[:, 0] = x
        chunk = 8192
        for c0 in range(0, n_steps, chunk):
            c1 = min(c0 + chunk, n_steps)
            L = c1 - c0
            w = np.empty((m, L, n), dtype=complex)
            for j, rng in enumerate(rngs):
                g = rng.standard_normal((L, n, 2))
                w[j] = (g[..., 0] + 1j * g[..., 1]) * noise_amp
            for k in range(L):
                # fixed-order sum keeps each row independent of the batch size
                nxt = bdt + w[:, k]
                for j in range(n):
                    nxt = nxt + x[:, j, None] * cols[j]
                x = nxt
                traj[:, c0 + k + 1] = x
        series[start : start + m] = traj[:, rec_idx]
        fl = traj - mean
        f, p = signal.welch(
            fl,
            fs=fs,
            window="hann",
            nperseg=min(nperseg, n_steps + 1),
            detrend=False,
            return_onesided=False,
            scaling="density",
            axis=1,
        )
        if psds is None:
            psds = np.empty((n_trajectories, n, len(f)))
            freqs = f
        psds[start : start + m] = np.moveaxis(p, 1, 2).real

    order = np.argsort(freqs)
    freqs = freqs[order]
    psds = psds[..., order]
    psd_mean = psds.mean(axis=0)
    if n_trajectories > 1:
        psd_err = psds.std(axis=0, ddof=1) / np.sqrt(n_trajectories)
    else:
        psd_err = np.full_like(psd_mean, np.nan)
    return LangevinRun(
        times=rec_idx * dt,
        series=series,
        freqs=freqs,
        psd=psd_mean,
        psd_stderr=psd_err,
        n_trajectories=n_trajectories,
        dt=dt,
        extra={"steady": mean},
    )
