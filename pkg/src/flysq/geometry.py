"""Compartment model of the vapor cell.

The cell is split into one dark region (index 0) and one cylindrical region
per enabled optical channel (indices 1..N).  Atoms are not tracked
individually: each region is treated as well stirred and atoms hop between
regions with first-order rates derived from the beam transit time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, GeometryError

#: Mean thermal speed that maps a 1.5 mm beam onto a 5 us transit time.
DEFAULT_MEAN_SPEED = 300.0


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CellConfig:
    length: float = 0.075
    diameter: float = 0.025
    coherence_lifetime: float = 0.030
    wall_collision_interval: float = 1.0e-4
    temperature: float = 55.0  # degC, informational only

    def __post_init__(self):
        for name in ("length", "diameter", "coherence_lifetime", "wall_collision_interval"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"cell.{name} must be positive, got {getattr(self, name)!r}")
        if self.coherence_lifetime <= self.wall_collision_interval:
            raise ConfigError(
                "cell.coherence_lifetime must exceed cell.wall_collision_interval "
                f"({self.coherence_lifetime} <= {self.wall_collision_interval})"
            )

    @property
    def intrinsic_decay(self) -> float:
        """Ground-state coherence decay rate in s^-1."""
        return 1.0 / self.coherence_lifetime


@dataclass(frozen=True)
class ChannelConfig:
    id: str
    power: float  # W
    beam_diameter: float = 1.5e-3  # m
    polarization_angle: float = 0.0  # rad, x axis = 0
    detuning: float = 0.0  # Hz, relative to F=2 -> F'=2
    position: tuple = (0.0, 0.0)  # m, recorded only
    enabled: bool = True

    def __post_init__(self):
        if not self.power >= 0:
            raise ConfigError(f"channel {self.id!r}: power must be >= 0, got {self.power!r}")
        if not self.beam_diameter > 0:
            raise ConfigError(
                f"channel {self.id!r}: beam_diameter must be positive, got {self.beam_diameter!r}"
            )
        object.__setattr__(self, "position", tuple(float(p) for p in self.position))

    @property
    def reduced_angle(self) -> float:
        """Polarization angle folded into [0, pi)."""
        return float(np.mod(self.polarization_angle, np.pi))


@dataclass(frozen=True, eq=False)
class RegionGraph:
    """Ordered regions; index 0 is the dark region, 1..N are channels."""

    regions: tuple
    volume_fraction: np.ndarray
    transit_time: np.ndarray  # per channel region, length N
    channels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "volume_fraction", _frozen(self.volume_fraction))
        object.__setattr__(self, "transit_time", _frozen(self.transit_time))
        f = self.volume_fraction
        if len(f) != len(self.regions) or len(self.transit_time) != len(f) - 1:
            raise ConfigError("region graph arrays have inconsistent lengths")
        if abs(f.sum() - 1.0) > 1e-12:
            raise GeometryError(f"volume fractions sum to {f.sum()!r}, not 1")
        if len(f) > 1 and (np.any(f <= 0) or np.any(f >= 1)):
            raise GeometryError(f"volume fractions must lie in (0, 1): {f.tolist()}")
        if np.any(self.transit_time <= 0):
            raise GeometryError("transit times must be positive")

    def __eq__(self, other):
        if not isinstance(other, RegionGraph):
            return NotImplemented
        return (
            self.regions == other.regions
            and np.array_equal(self.volume_fraction, other.volume_fraction)
            and np.array_equal(self.transit_time, other.transit_time)
        )

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def n_channels(self) -> int:
        return len(self.regions) - 1

    def index(self, channel_id: str) -> int:
        """Region index of a channel label."""
        try:
            return self.regions.index(channel_id)
        except ValueError:
            raise KeyError(f"no enabled channel {channel_id!r}; have {list(self.regions[1:])}") from None


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """K[i, j] is the atom flow rate from region j into region i (s^-1).

    K acts on atom numbers, so its columns sum to zero.  The matrix acting on
    per-atom (intensive) quantities such as the coherence is obtained by the
    similarity transform with the volume fractions, see :meth:`intensive`.
    """

    K: np.ndarray
    volume_fraction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _frozen(self.K))
        object.__setattr__(self, "volume_fraction", _frozen(self.volume_fraction))

    def intensive(self) -> np.ndarray:
        """F^-1 K F: generator for per-atom quantities; rows sum to zero."""
        f = self.volume_fraction
        return self.K * f[None, :] / f[:, None]


def transit_time(channel: ChannelConfig, mean_speed: float = DEFAULT_MEAN_SPEED) -> float:
    if not channel.beam_diameter > 0 or not mean_speed > 0:
        raise DomainError(
            f"transit time needs positive beam diameter and speed "
            f"(got d={channel.beam_diameter!r}, v={mean_speed!r})"
        )
    return channel.beam_diameter / mean_speed


def build_region_graph(
    cell: CellConfig,
    channels: Sequence[ChannelConfig],
    mean_speed: float = DEFAULT_MEAN_SPEED,
) -> RegionGraph:
    active = [ch for ch in channels if ch.enabled]
    ids = [ch.id for ch in active]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate channel ids: {ids}")
    for ch in active:
        if ch.beam_diameter >= cell.diameter:
            raise GeometryError(
                f"channel {ch.id!r}: beam diameter {ch.beam_diameter} m does not fit in a "
                f"{cell.diameter} m cell"
            )
    # equal-length cylinders, so the volume ratio is the area ratio
    fractions = [(ch.beam_diameter / cell.diameter) ** 2 for ch in active]
    total = float(np.sum(fractions))
    if total >= 1.0:
        raise GeometryError(
            f"channel beams occupy a volume fraction of {total:.4f} >= 1 of the cell"
        )
    return RegionGraph(
        regions=("dark",) + tuple(ids),
        volume_fraction=[1.0 - total] + fractions,
        transit_time=[transit_time(ch, mean_speed) for ch in active],
        channels=tuple(active),
    )


def exchange_matrix(graph: RegionGraph) -> RateMatrix:
    n = graph.n_regions
    f = graph.volume_fraction
    K = np.zeros((n, n))
    for i in range(1, n):
        out = 1.0 / graph.transit_time[i - 1]
        inflow = (f[i] / f[0]) * out
        K[0, i] = out
        K[i, 0] = inflow
    K[np.diag_indices(n)] = -K.sum(axis=0)
    return RateMatrix(K=K, volume_fraction=f)
