"""TOML run configuration and calibration-target files.

All quantities are SI: powers in W, detunings and frequencies in Hz, angles
in rad, lengths in m.  Frequencies stay in Hz here; the model converts to
rad/s internally.

A run configuration looks like::

    seed = 1
    output = "out"

    [cell]
    diameter = 0.025

    [optics]                  # omitted -> built-in calibrated constants
    nonlinear_gain = 120.0    # or: optics = "calibrate"

    [spectrum]
    f_min = 1e3
    f_max = 2e6
    points = 200
    scale = "log"

    [[channels]]
    id = "ch1"
    power = 4.5e-3
    detuning = 348e6
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

from .errors import ConfigError
from .geometry import DEFAULT_MEAN_SPEED, CellConfig, ChannelConfig, build_region_graph
from .optics import OpticalParams
from .spin import AtomParams


@dataclass(frozen=True)
class SpectrumGrid:
    f_min: float = 1e3
    f_max: float = 2e6
    points: int = 200
    scale: str = "log"

    def __post_init__(self):
        if not self.f_min > 0:
            raise ConfigError(f"spectrum.f_min: spectrum grid must exclude DC (f_min = {self.f_min!r})")
        if not self.f_max > self.f_min:
            raise ConfigError(f"spectrum.f_max must exceed f_min ({self.f_max!r} <= {self.f_min!r})")
        if self.points < 2:
            raise ConfigError(f"spectrum.points must be >= 2, got {self.points!r}")
        if self.scale not in ("log", "linear"):
            raise ConfigError(f"spectrum.scale must be 'log' or 'linear', got {self.scale!r}")

    def frequencies(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.f_min, self.f_max, self.points)
        return np.linspace(self.f_min, self.f_max, self.points)


def _calibrated_atom() -> AtomParams:
    from .calibration import CALIBRATED_ATOM

    return CALIBRATED_ATOM


@dataclass(frozen=True)
class RunConfig:
    cell: CellConfig = field(default_factory=CellConfig)
    channels: tuple = ()
    atom: AtomParams = field(default_factory=_calibrated_atom)
    optics: Optional[OpticalParams] = None  # None -> calibrated defaults
    calibrate: bool = False
    spectrum: SpectrumGrid = field(default_factory=SpectrumGrid)
    seed: int = 0
    output: str = "flysq-out"
    mean_speed: float = DEFAULT_MEAN_SPEED
    shared_depumping: bool = True

    def resolved_optics(self) -> OpticalParams:
        if self.optics is not None:
            return self.optics
        from .calibration import CALIBRATED_OPTICS

        return CALIBRATED_OPTICS

    def channel(self, channel_id: str) -> ChannelConfig:
        for ch in self.channels:
            if ch.id == channel_id:
                return ch
        raise ConfigError(
            f"unknown channel {channel_id!r}; configured: {', '.join(c.id for c in self.channels) or 'none'}"
        )


# ---- parsing ------------------------------------------------------------------

_TOP_KEYS = {"seed", "output", "mean_speed", "shared_depumping", "cell", "atom", "optics", "spectrum", "channels"}
_CHANNEL_KEYS = {f.name for f in fields(ChannelConfig)}


def _number(value, path: str, *, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}: expected a finite number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _check_keys(table: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError("unknown key(s): " + ", ".join(where + k for k in unknown))


def _table(doc: dict, key: str) -> dict:
    t = doc.get(key, {})
    if not isinstance(t, dict):
        raise ConfigError(f"{key}: expected a table, got {t!r}")
    return t


def _build(cls, table: dict, path: str, **extra):
    allowed = {f.name for f in fields(cls)}
    _check_keys(table, allowed, path)
    kwargs = {k: _number(v, f"{path}.{k}") for k, v in table.items()}
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_channel(table: dict, path: str) -> ChannelConfig:
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: expected a table, got {table!r}")
    _check_keys(table, _CHANNEL_KEYS, path)
    for req in ("id", "power"):
        if req not in table:
            raise ConfigError(f"{path}.{req}: missing required key")
    if not isinstance(table["id"], str) or not table["id"]:
        raise ConfigError(f"{path}.id: expected a non-empty string")
    kw: dict[str, Any] = {"id": table["id"]}
    for k in ("power", "beam_diameter", "polarization_angle", "detuning"):
        if k in table:
            kw[k] = _number(table[k], f"{path}.{k}")
    if kw["power"] < 0:
        raise ConfigError(f"{path}.power: must be >= 0 W, got {kw['power']!r}")
    if "position" in table:
        pos = table["position"]
        if not isinstance(pos, list) or len(pos) != 2:
            raise ConfigError(f"{path}.position: expected [x, y] in m")
        kw["position"] = tuple(_number(p, f"{path}.position") for p in pos)
    if "enabled" in table:
        if not isinstance(table["enabled"], bool):
            raise ConfigError(f"{path}.enabled: expected true/false")
        kw["enabled"] = table["enabled"]
    try:
        return ChannelConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    _check_keys(doc, _TOP_KEYS, "")
    cell = _build(CellConfig, _table(doc, "cell"), "cell")

    atom_t = dict(_table(doc, "atom"))
    # unset lineshape constants take their fitted values
    for k in ("excited_linewidth", "cg_ratio"):
        atom_t.setdefault(k, getattr(_calibrated_atom(), k))
    if "intrinsic_decay" not in atom_t:
        atom_t["intrinsic_decay"] = cell.intrinsic_decay
    atom = _build(AtomParams, atom_t, "atom")

    optics = None
    calibrate = False
    raw_opt = doc.get("optics")
    if raw_opt == "calibrate":
        calibrate = True
    elif isinstance(raw_opt, dict):
        optics = _build(OpticalParams, raw_opt, "optics")
    elif raw_opt is not None:
        raise ConfigError(f"optics: expected a table or \"calibrate\", got {raw_opt!r}")

    spec_t = _table(doc, "spectrum")
    _check_keys(spec_t, {f.name for f in fields(SpectrumGrid)}, "spectrum")
    kw: dict[str, Any] = {}
    for k in ("f_min", "f_max"):
        if k in spec_t:
            kw[k] = _number(spec_t[k], f"spectrum.{k}")
    if "points" in spec_t:
        kw["points"] = _number(spec_t["points"], "spectrum.points", integer=True)
    if "scale" in spec_t:
        kw["scale"] = spec_t["scale"]
    spectrum = SpectrumGrid(**kw)

    raw_ch = doc.get("channels", [])
    if not isinstance(raw_ch, list):
        raise ConfigError("channels: expected an array of tables ([[channels]])")
    channels = tuple(parse_channel(t, f"channels[{i}]") for i, t in enumerate(raw_ch))
    ids = [c.id for c in channels]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ConfigError(f"channels: duplicate id(s) {', '.join(dupes)}")

    seed = _number(doc.get("seed", 0), "seed", integer=True)
    if seed < 0:
        raise ConfigError(f"seed: must be >= 0, got {seed}")
    output = doc.get("output", "flysq-out")
    if not isinstance(output, str) or not output:
        raise ConfigError("output: expected a directory path string")
    mean_speed = _number(doc.get("mean_speed", DEFAULT_MEAN_SPEED), "mean_speed")
    if mean_speed <= 0:
        raise ConfigError(f"mean_speed: must be positive m/s, got {mean_speed!r}")
    shared = doc.get("shared_depumping", True)
    if not isinstance(shared, bool):
        raise ConfigError("shared_depumping: expected true/false")

    # surfaces GeometryError with the computed fraction
    build_region_graph(cell, channels, mean_speed)

    return RunConfig(
        cell=cell,
        channels=channels,
        atom=atom,
        optics=optics,
        calibrate=calibrate,
        spectrum=spectrum,
        seed=seed,
        output=output,
        mean_speed=mean_speed,
        shared_depumping=shared,
    )


def parse_config(text: str) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return config_from_dict(doc)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ---- echo ----------------------------------------------------------------------


def _dataclass_dict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-data echo of a config; ``config_from_dict`` maps it back to an equal config."""
    doc: dict[str, Any] = {
        "seed": cfg.seed,
        "output": cfg.output,
        "mean_speed": cfg.mean_speed,
        "shared_depumping": cfg.shared_depumping,
        "cell": _dataclass_dict(cfg.cell),
        "atom": _dataclass_dict(cfg.atom),
        "spectrum": _dataclass_dict(cfg.spectrum),
        "channels": [
            {**_dataclass_dict(ch), "position": list(ch.position)} for ch in cfg.channels
        ],
    }
    if cfg.calibrate:
        doc["optics"] = "calibrate"
    elif cfg.optics is not None:
        doc["optics"] = cfg.optics.as_dict()
    return doc


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))
