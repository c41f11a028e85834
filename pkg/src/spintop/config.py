"""TOML run configuration: schema, defaults, and validation.

Sections and keys:

  [protocol]  k (required), N (required), sigma_over_sqrtJ, p, n_steps
  [atomlight] sigma0_over_A, gamma_s, dt_factor
  [lyapunov]  d0, n_shadows, renorm_interval, ic_grid_size, n_steps, n_discard
  [run]       n_trajectories, ics (list of [theta, phi]) or ic_grid_size
  [sweep]     sigma_grid, od_grid, k_grid

Unknown sections or keys are rejected, and every validation failure
names the offending key path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from .errors import ConfigError

__all__ = [
    "ProtocolSection",
    "AtomLightSection",
    "LyapunovSection",
    "RunSection",
    "SweepSection",
    "Config",
    "DEFAULT_SIGMA_GRID",
    "DEFAULT_OD_GRID",
    "load_config",
    "parse_config",
]

# sigma/sqrt(J) grid spanning the under- to over-resolved regimes
DEFAULT_SIGMA_GRID = tuple(float(s) for s in np.geomspace(0.1, 10.0, 13).round(6))
DEFAULT_OD_GRID = (300.0, 100.0, 30.0)


@dataclass(frozen=True)
class ProtocolSection:
    k: float
    n_atoms: int
    sigma_over_sqrtj: float = 0.9
    p: float = math.pi / 2
    n_steps: int = 30


@dataclass(frozen=True)
class AtomLightSection:
    sigma0_over_a: float = 3e-4
    gamma_s: float = 1.0
    dt_factor: float = 0.05


@dataclass(frozen=True)
class LyapunovSection:
    d0: float = 1e-6
    n_shadows: int = 4
    renorm_interval: int = 1
    ic_grid_size: int = 200
    n_steps: int | None = None  # None: 500 classical, 100 stochastic
    n_discard: int = 10


@dataclass(frozen=True)
class RunSection:
    n_trajectories: int = 1
    ics: tuple = ((2.0, 1.0),)  # (theta, phi) pairs
    ic_grid_size: int | None = None


@dataclass(frozen=True)
class SweepSection:
    sigma_grid: tuple = DEFAULT_SIGMA_GRID
    od_grid: tuple = DEFAULT_OD_GRID
    k_grid: tuple | None = None


@dataclass(frozen=True)
class Config:
    protocol: ProtocolSection
    atomlight: AtomLightSection = field(default_factory=AtomLightSection)
    lyapunov: LyapunovSection = field(default_factory=LyapunovSection)
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection = field(default_factory=SweepSection)


def _require(table: dict, section: str, known: dict) -> dict:
    """Map TOML keys to dataclass fields, rejecting unknown keys."""
    out = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown key")
        out[known[key]] = value
    return out


def _number(section: str, key: str, value, *, minimum=None, maximum=None,
            exclusive_min=False, allow_zero=True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise ConfigError(f"{section}.{key}: must be finite")
    if not allow_zero and x == 0:
        raise ConfigError(f"{section}.{key}: must be nonzero")
    if minimum is not None and (x < minimum or (exclusive_min and x == minimum)):
        raise ConfigError(f"{section}.{key}: must be > {minimum}" if exclusive_min
                          else f"{section}.{key}: must be >= {minimum}")
    if maximum is not None and x > maximum:
        raise ConfigError(f"{section}.{key}: must be <= {maximum}")
    return x


def _integer(section: str, key: str, value, *, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{section}.{key}: must be >= {minimum}")
    return value


def _grid(section: str, key: str, value, *, minimum=None) -> tuple:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{section}.{key}: expected a nonempty list of numbers")
    return tuple(
        _number(section, f"{key}[{i}]", v, minimum=minimum, exclusive_min=True)
        for i, v in enumerate(value)
    )


def parse_config(data: dict) -> Config:
    """Build a validated Config from a parsed TOML tree."""
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a table of sections")
    known_sections = {"protocol", "atomlight", "lyapunov", "run", "sweep"}
    for name in data:
        if name not in known_sections:
            raise ConfigError(f"{name}: unknown section")
        if not isinstance(data[name], dict):
            raise ConfigError(f"{name}: expected a table")

    if "protocol" not in data:
        raise ConfigError("protocol: section is required")
    praw = _require(data["protocol"], "protocol", {
        "k": "k", "N": "n_atoms", "sigma_over_sqrtJ": "sigma_over_sqrtj",
        "p": "p", "n_steps": "n_steps",
    })
    if "k" not in praw:
        raise ConfigError("protocol.k: key is required")
    if "n_atoms" not in praw:
        raise ConfigError("protocol.N: key is required")
    protocol = ProtocolSection(
        k=_number("protocol", "k", praw["k"]),
        n_atoms=_integer("protocol", "N", praw["n_atoms"], minimum=1),
        sigma_over_sqrtj=_number("protocol", "sigma_over_sqrtJ",
                                 praw.get("sigma_over_sqrtj", 0.9),
                                 minimum=0.0, exclusive_min=True),
        p=_number("protocol", "p", praw.get("p", math.pi / 2)),
        n_steps=_integer("protocol", "n_steps", praw.get("n_steps", 30), minimum=0),
    )

    araw = _require(data.get("atomlight", {}), "atomlight", {
        "sigma0_over_A": "sigma0_over_a", "gamma_s": "gamma_s",
        "dt_factor": "dt_factor",
    })
    atomlight = AtomLightSection(
        sigma0_over_a=_number("atomlight", "sigma0_over_A",
                              araw.get("sigma0_over_a", 3e-4),
                              minimum=0.0, exclusive_min=True),
        gamma_s=_number("atomlight", "gamma_s", araw.get("gamma_s", 1.0),
                        minimum=0.0),
        dt_factor=_number("atomlight", "dt_factor", araw.get("dt_factor", 0.05),
                          minimum=0.0, exclusive_min=True, maximum=0.05),
    )

    lraw = _require(data.get("lyapunov", {}), "lyapunov", {
        "d0": "d0", "n_shadows": "n_shadows", "renorm_interval": "renorm_interval",
        "ic_grid_size": "ic_grid_size", "n_steps": "n_steps",
        "n_discard": "n_discard",
    })
    lyap_steps = lraw.get("n_steps")
    if lyap_steps is not None:
        lyap_steps = _integer("lyapunov", "n_steps", lyap_steps, minimum=1)
    lyapunov = LyapunovSection(
        d0=_number("lyapunov", "d0", lraw.get("d0", 1e-6),
                   minimum=0.0, exclusive_min=True),
        n_shadows=_integer("lyapunov", "n_shadows", lraw.get("n_shadows", 4),
                           minimum=1),
        renorm_interval=_integer("lyapunov", "renorm_interval",
                                 lraw.get("renorm_interval", 1), minimum=1),
        ic_grid_size=_integer("lyapunov", "ic_grid_size",
                              lraw.get("ic_grid_size", 200), minimum=1),
        n_steps=lyap_steps,
        n_discard=_integer("lyapunov", "n_discard", lraw.get("n_discard", 10),
                           minimum=0),
    )

    rraw = _require(data.get("run", {}), "run", {
        "n_trajectories": "n_trajectories", "ics": "ics",
        "ic_grid_size": "ic_grid_size",
    })
    if "ics" in rraw and "ic_grid_size" in rraw:
        raise ConfigError("run.ics: give either ics or ic_grid_size, not both")
    run_grid = rraw.get("ic_grid_size")
    if run_grid is not None:
        run_grid = _integer("run", "ic_grid_size", run_grid, minimum=1)
    ics = ((2.0, 1.0),)
    if "ics" in rraw:
        raw_ics = rraw["ics"]
        if not isinstance(raw_ics, (list, tuple)) or not raw_ics:
            raise ConfigError("run.ics: expected a nonempty list of [theta, phi] pairs")
        parsed = []
        for i, pair in enumerate(raw_ics):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(f"run.ics[{i}]: expected a [theta, phi] pair")
            theta = _number("run", f"ics[{i}][0]", pair[0])
            phi = _number("run", f"ics[{i}][1]", pair[1])
            if not 0.0 <= theta <= math.pi:
                raise ConfigError(f"run.ics[{i}][0]: theta must lie in [0, pi]")
            parsed.append((theta, phi))
        ics = tuple(parsed)
    run = RunSection(
        n_trajectories=_integer("run", "n_trajectories",
                                rraw.get("n_trajectories", 1), minimum=1),
        ics=ics,
        ic_grid_size=run_grid,
    )

    sraw = _require(data.get("sweep", {}), "sweep", {
        "sigma_grid": "sigma_grid", "od_grid": "od_grid", "k_grid": "k_grid",
    })
    k_grid = sraw.get("k_grid")
    if k_grid is not None:
        if not isinstance(k_grid, (list, tuple)) or not k_grid:
            raise ConfigError("sweep.k_grid: expected a nonempty list of numbers")
        k_grid = tuple(_number("sweep", f"k_grid[{i}]", v)
                       for i, v in enumerate(k_grid))
    sweep = SweepSection(
        sigma_grid=(_grid("sweep", "sigma_grid", sraw["sigma_grid"], minimum=0.0)
                    if "sigma_grid" in sraw else DEFAULT_SIGMA_GRID),
        od_grid=(_grid("sweep", "od_grid", sraw["od_grid"], minimum=0.0)
                 if "od_grid" in sraw else DEFAULT_OD_GRID),
        k_grid=k_grid,
    )

    return Config(protocol=protocol, atomlight=atomlight, lyapunov=lyapunov,
                  run=run, sweep=sweep)


def load_config(path: str) -> Config:
    """Parse and validate a TOML config file."""
    try:
        with open(path, "rb") as f:
            data = tomli.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(data)
