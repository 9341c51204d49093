"""Run configuration: room/AP/receiver parameters, experiment plan and PON shapes.

Configs are YAML. Any subset of keys may be given; the rest fall back to the
defaults below, which match ``configs/default.yaml``.
"""
from __future__ import annotations

import copy
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .allocator import MULTI_AP, SINGLE_AP
from .channel import (ApSpec, BranchSpec, ReceiverSpec, RoomConfig, WAVELENGTHS,
                      channel_config_dict, default_aps, fingerprint)
from .linkmetrics import SinrParams
from .scenario import COMBINERS, FAILURES

CONFIG_ENV = "OWC_CONFIG"


class ConfigError(ValueError):
    pass


def _default_positions():
    return [list(ap.position) for ap in default_aps()]


DEFAULTS = {
    "room": asdict(RoomConfig()),
    "aps": {
        # x along the length, y along the width, z height (m)
        "positions": _default_positions(),
        "semi_angle_half_power": 60.0,
        "lds_per_ap": 12,
        "per_ld_power": {"red": 0.8, "yellow": 0.5, "green": 0.3, "blue": 0.3},
    },
    "receiver": {
        "azimuths": [45.0, 135.0, 225.0, 315.0],
        "elevation": 70.0,
        "fov": 25.0,
        "area": 20e-6,
        "responsivity": {"red": 0.4, "yellow": 0.435, "green": 0.3, "blue": 0.2},
        "bandwidth": 1.75e9,
        "noise_density": 4.47e-12,
        "height": 1.0,
    },
    "grid": {"pitch": 1.0},
    "sinr": {"threshold_db": 13.8, "K": 1000.0},
    "illumination_scale": 1.0,
    "experiment": {
        "seed": 1,
        "n_drops": 20,
        "n_users": [1, 2, 3, 4, 5, 6, 7],
        "modes": [SINGLE_AP, MULTI_AP],
        "failures": ["none", "ap1", "ap5", "ap1_and_ap5"],
        "failure_users": [1, 2, 3],
        "combiner": "mean",
        "failed_ap_light": "lit",
    },
    "pon": {
        "awgr": {"n_aps": 8, "n_sets": 4, "awgr_size": 4, "rate": 10.0, "n_wavelengths": 4,
                 "mesh_wavelengths": 1},
        "p2p": {"n_aps": 8, "n_groups": 2, "n_subgroups": 2, "rate": 10.0, "n_wavelengths": 4},
        "switch": {"n_aps": 8, "aps_per_switch": 4, "rate": 10.0},
    },
    "output_dir": "results",
    "workers": 1,
}


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and not isinstance(val, dict):
            raise ConfigError(f"{where!r} must be a mapping")
        if isinstance(base[key], dict) and key not in ("per_ld_power", "responsivity"):
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def grid_points(room: RoomConfig, pitch: float, z: float) -> np.ndarray:
    """Cell centres of a ``pitch`` square tiling; index = ix * n_y + iy."""
    if pitch <= 0:
        raise ConfigError("grid pitch must be positive")
    xs = np.arange(pitch / 2, room.length, pitch)
    ys = np.arange(pitch / 2, room.width, pitch)
    return np.array([(x, y, z) for x in xs for y in ys], dtype=float)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1
    n_drops: int = 20
    n_users: tuple = (1, 2, 3, 4, 5, 6, 7)
    modes: tuple = (SINGLE_AP, MULTI_AP)
    failures: tuple = ("none", "ap1", "ap5", "ap1_and_ap5")
    failure_users: tuple = (1, 2, 3)
    combiner: str = "mean"
    failed_ap_light: str = "lit"


@dataclass
class RunConfig:
    room: RoomConfig
    aps: tuple
    receiver: ReceiverSpec
    grid: np.ndarray
    sinr: SinrParams
    illumination_scale: float
    experiment: ExperimentConfig
    pon: dict
    output_dir: Path
    workers: int
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def sigma(self) -> float:
        return self.receiver.noise_density**2 * self.receiver.bandwidth

    def channel_dict(self) -> dict:
        return channel_config_dict(self.room, self.aps, self.receiver, self.grid, self.illumination_scale)

    @property
    def channel_fingerprint(self) -> str:
        return fingerprint(self.channel_dict())

    @property
    def fingerprint(self) -> str:
        """Hash of everything that can change results (not output_dir or workers)."""
        payload = {k: v for k, v in self.raw.items() if k not in ("output_dir", "workers")}
        return fingerprint(payload)


def from_dict(data: dict | None) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    raw = _merge(DEFAULTS, data)
    try:
        room = RoomConfig(**raw["room"])
        a = raw["aps"]
        if set(a["per_ld_power"]) != set(WAVELENGTHS):
            raise ConfigError(f"per_ld_power needs keys {WAVELENGTHS}")
        aps = tuple(
            ApSpec(position=tuple(float(c) for c in pos), semi_angle_half_power=float(a["semi_angle_half_power"]),
                   lds_per_ap=int(a["lds_per_ap"]), per_ld_power=dict(a["per_ld_power"]))
            for pos in a["positions"]
        )
        if not aps:
            raise ConfigError("at least one AP is required")
        for ap in aps:
            x, y, z = ap.position
            if not (0 <= x <= room.length and 0 <= y <= room.width and 0 < z <= room.height):
                raise ConfigError(f"AP position {ap.position} lies outside the room")
            ap.lambertian_mode_n
        r = raw["receiver"]
        if set(r["responsivity"]) != set(WAVELENGTHS):
            raise ConfigError(f"responsivity needs keys {WAVELENGTHS}")
        receiver = ReceiverSpec(
            branches=tuple(BranchSpec(float(az), float(r["elevation"]), float(r["fov"]), float(r["area"]))
                           for az in r["azimuths"]),
            responsivity=dict(r["responsivity"]), bandwidth=float(r["bandwidth"]),
            noise_density=float(r["noise_density"]), height=float(r["height"]),
        )
        if receiver.bandwidth <= 0 or receiver.noise_density <= 0:
            raise ConfigError("bandwidth and noise density must be positive")
        if not 0 < receiver.height < room.height:
            raise ConfigError("receiver height must lie inside the room")
        grid = grid_points(room, float(raw["grid"]["pitch"]), receiver.height)
        sinr = SinrParams(float(raw["sinr"]["threshold_db"]), float(raw["sinr"]["K"]))
        scale = float(raw["illumination_scale"])
        if scale < 0:
            raise ConfigError("illumination_scale must be non-negative")
        e = raw["experiment"]
        exp = ExperimentConfig(
            seed=int(e["seed"]), n_drops=int(e["n_drops"]), n_users=tuple(int(n) for n in e["n_users"]),
            modes=tuple(e["modes"]), failures=tuple(e["failures"]),
            failure_users=tuple(int(n) for n in e["failure_users"]),
            combiner=e["combiner"], failed_ap_light=e["failed_ap_light"],
        )
        _check_experiment(exp, len(grid), len(aps))
        workers = int(raw["workers"])
        if workers == 0:
            raise ConfigError("workers must be nonzero")
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(room, aps, receiver, grid, sinr, scale, exp, copy.deepcopy(raw["pon"]),
                     Path(raw["output_dir"]), workers, raw)


def _check_experiment(exp: ExperimentConfig, n_locations: int, n_aps: int):
    if exp.n_drops < 0:
        raise ConfigError("n_drops must be non-negative")
    for n in exp.n_users + exp.failure_users:
        if not 0 <= n <= n_locations:
            raise ConfigError(f"n_users {n} outside 0..{n_locations}")
    for m in exp.modes:
        if m not in (SINGLE_AP, MULTI_AP):
            raise ConfigError(f"unknown mode {m!r}")
    for f in exp.failures:
        if f not in FAILURES:
            raise ConfigError(f"unknown failure scenario {f!r}; choose from {sorted(FAILURES)}")
        if any(a >= n_aps for a in FAILURES[f].failed_aps):
            raise ConfigError(f"failure {f!r} references an AP beyond the {n_aps} configured")
    if exp.combiner not in COMBINERS:
        raise ConfigError(f"unknown combiner {exp.combiner!r}")
    if exp.failed_ap_light not in ("lit", "dark"):
        raise ConfigError("failed_ap_light must be 'lit' or 'dark'")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load YAML from ``path``, else from $OWC_CONFIG, else the built-in defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    data = {}
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if overrides:
        data = _merge(_merge(DEFAULTS, data), overrides)
    return from_dict(data)


def dump_defaults() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)
