"""Run configuration: schema, defaults, file loading, overrides, hashing.

Configs are TOML with six sections -- grid, params, kernel, memory, initial,
run -- and every key is optional: the empty config *is* the reference
configuration (N = 128 on the 20*pi box, tau = c2 = 1, b = 1.5, exponential
kernel of mass 0.2, dt = 1e-3).  Unknown sections or keys are rejected by
name rather than ignored, so a typo cannot silently fall back to a default.

``--override section.key=value`` strings go through the same schema check;
values are parsed as TOML fragments (so booleans, numbers and lists coerce
naturally) with a bare-string fallback.  The canonical merged mapping is
hashed and the hash is stamped into every artifact the runner writes:
identical config and seed means identical artifacts, bit for bit.
"""
import copy
import dataclasses
import hashlib
import json
import math
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib  # type: ignore[no-redef]

import numpy as np

from .dynamics import RhsConfig, stable_dt
from .kernels import ExponentialKernel, MemoryKernel, ZeroKernel, load_kernel_table
from .spectral import Field, Grid, gaussian_bump, zero_mean
from .state import HistoryConfig, State, SystemParams, init_state


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


_DEFAULTS: dict = {
    "grid": {"shape": [128], "lengths": [20.0 * math.pi]},
    "params": {"tau": 1.0, "b": 1.5, "c2": 1.0, "k": 1.0},
    "kernel": {"type": "exponential", "coupling": 0.2, "tau_r": 1.0, "path": ""},
    "memory": {"mode": "dafermos", "s_max": 30.0, "n_intervals": 256},
    "initial": {
        "profile": "gaussian",  # gaussian | mode | zero | file
        "amplitude": 1.0,       # scale of the displacement component
        "v_amplitude": 0.5,     # scale of the velocity component
        "w_amplitude": 0.0,     # scale of the acceleration component
        "width": 0.0,           # gaussian width; 0 means the grid default L/16
        "mode": 1,              # wavenumber index for profile = "mode"
        "phase": 0.0,
        "path": "",             # .npz with arrays psi / v / w for "file"
        "zero_mean": True,
    },
    "run": {"dt": 1e-3, "t_final": 2.0, "stride": 10, "p": 1,
            "nonlinear": False, "seed": 0},
}


def _coerce(section: str, key: str, value):
    default = _DEFAULTS[section][key]
    name = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    # lists: grid.shape (integers) and grid.lengths (numbers)
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{name} must be a non-empty list")
    out = []
    for entry in value:
        if key == "shape":
            if isinstance(entry, bool) or not isinstance(entry, int):
                raise ConfigError(f"{name} entries must be integers")
            out.append(entry)
        else:
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise ConfigError(f"{name} entries must be numbers")
            out.append(float(entry))
    return out


def _merge(user: dict) -> dict:
    cfg = copy.deepcopy(_DEFAULTS)
    for section, table in user.items():
        if section not in cfg:
            raise ConfigError(f"[{section}] is not a recognized section")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table of keys")
        for key, value in table.items():
            if key not in cfg[section]:
                raise ConfigError(f"{section}.{key} is not a recognized key")
            cfg[section][key] = _coerce(section, key, value)
    return cfg


def _parse_override_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text  # unquoted strings: memory.mode=closure


def _apply_override(user: dict, item: str) -> None:
    key, sep, text = item.partition("=")
    parts = key.strip().split(".")
    if not sep or len(parts) != 2 or not all(parts):
        raise ConfigError(
            f"override {item!r} is not of the form section.key=value")
    user.setdefault(parts[0], {})[parts[1]] = _parse_override_value(text)


def config_hash(mapping: dict) -> str:
    """16-hex digest of the canonical JSON form (defaults filled, keys sorted)."""
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build_kernel(cfg: dict) -> MemoryKernel:
    kc = cfg["kernel"]
    if kc["type"] == "zero":
        return ZeroKernel()
    if kc["type"] == "exponential":
        try:
            return ExponentialKernel(kc["coupling"], cfg["params"]["c2"],
                                     kc["tau_r"])
        except ValueError as exc:
            raise ConfigError(f"kernel: {exc}") from None
    if kc["type"] == "file":
        if not kc["path"]:
            raise ConfigError("kernel.path is required when kernel.type = 'file'")
        try:
            return load_kernel_table(kc["path"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"kernel.path: {exc}") from None
    raise ConfigError("kernel.type must be one of 'exponential', 'zero', 'file'")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """A validated run: constructed objects plus the canonical raw mapping."""

    raw: dict
    grid: Grid
    params: SystemParams
    history: HistoryConfig
    dt: float
    t_final: float
    stride: int
    p: int
    nonlinear: bool
    seed: int

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def rhs_config(self) -> RhsConfig:
        return RhsConfig(memory_mode=self.history.mode, nonlinear=self.nonlinear)

    def describe(self) -> str:
        p = self.params
        shape = "x".join(str(n) for n in self.grid.shape)
        return (f"{p.regime} regime (b - tau*c2 = {p.delta:g}), "
                f"c_g^2 = {p.cg2:g}, grid {shape}, dt = {self.dt:g}, "
                f"T = {self.t_final:g}")

    def initial_state(self) -> State:
        psi0, v0, w0 = self.initial_fields()
        return init_state(self.params, psi0, v0, w0, self.history)

    def initial_fields(self) -> tuple:
        """The configured (psi, v, w) data, independent of the parameters."""
        spec = self.raw["initial"]
        grid = self.grid
        profile = spec["profile"]
        if profile == "zero":
            psi0 = v0 = w0 = Field.zeros(grid)
        elif profile == "gaussian":
            width = spec["width"] if spec["width"] > 0 else None
            base = gaussian_bump(grid, amplitude=1.0, width=width)
            if spec["zero_mean"]:
                base = zero_mean(base)
            psi0 = spec["amplitude"] * base
            v0 = spec["v_amplitude"] * base
            w0 = spec["w_amplitude"] * base
        elif profile == "mode":
            vals = np.ones(())
            for x, length in zip(grid.coords, grid.lengths):
                vals = vals * np.cos(
                    2.0 * math.pi * spec["mode"] * x / length + spec["phase"])
            base = Field(grid, np.broadcast_to(vals, grid.shape).copy())
            psi0 = spec["amplitude"] * base
            v0 = spec["v_amplitude"] * base
            w0 = spec["w_amplitude"] * base
        elif profile == "file":
            if not spec["path"]:
                raise ConfigError(
                    "initial.path is required when initial.profile = 'file'")
            try:
                data = np.load(spec["path"])
            except (OSError, ValueError) as exc:
                raise ConfigError(f"initial.path: {exc}") from None

            def component(name: str) -> Field:
                if name not in data:
                    return Field.zeros(grid)
                arr = np.asarray(data[name], dtype=float)
                if arr.shape != grid.shape:
                    raise ConfigError(
                        f"initial.path: array {name!r} has shape {arr.shape}, "
                        f"the grid expects {grid.shape}")
                return Field(grid, arr)

            psi0, v0, w0 = component("psi"), component("v"), component("w")
        else:
            raise ConfigError(
                "initial.profile must be one of 'gaussian', 'mode', 'zero', 'file'")
        return psi0, v0, w0


def _build(cfg: dict) -> RunConfig:
    g = cfg["grid"]
    if len(g["shape"]) != len(g["lengths"]):
        raise ConfigError("grid.lengths must match grid.shape in length")
    try:
        grid = Grid(tuple(g["shape"]), tuple(g["lengths"]))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None

    pc = cfg["params"]
    for key in ("tau", "c2"):
        if not pc[key] > 0:
            raise ConfigError(f"params.{key} must be positive")
    if pc["b"] < 0:
        raise ConfigError("params.b must be nonnegative")
    kernel = _build_kernel(cfg)
    try:
        params = SystemParams(tau=pc["tau"], b=pc["b"], c2=pc["c2"],
                              k=pc["k"], kernel=kernel)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None

    mc = cfg["memory"]
    try:
        history = HistoryConfig(mode=mc["mode"], s_max=mc["s_max"],
                                n_intervals=mc["n_intervals"])
    except ValueError as exc:
        raise ConfigError(f"memory: {exc}") from None
    if history.mode == "closure" and not (
            kernel.is_zero or isinstance(kernel, ExponentialKernel)):
        raise ConfigError(
            "memory.mode: the moment closure needs an exponential or zero kernel")

    if cfg["initial"]["profile"] == "mode" and cfg["initial"]["mode"] < 1:
        raise ConfigError("initial.mode must be >= 1")

    rc = cfg["run"]
    if not rc["dt"] > 0:
        raise ConfigError("run.dt must be positive")
    if not rc["t_final"] > 0:
        raise ConfigError("run.t_final must be positive")
    n_steps = round(rc["t_final"] / rc["dt"])
    if n_steps < 1 or abs(n_steps * rc["dt"] - rc["t_final"]) > 1e-9 * rc["t_final"]:
        raise ConfigError("run.t_final must be a whole number of dt steps")
    if rc["stride"] < 1:
        raise ConfigError("run.stride must be >= 1")
    if rc["p"] < 0:
        raise ConfigError("run.p must be >= 0")
    cap = stable_dt(grid, params)
    if rc["dt"] > 1.05 * cap:
        raise ConfigError(
            f"run.dt exceeds the stability bound {cap:.3e} for this grid")

    return RunConfig(raw=cfg, grid=grid, params=params, history=history,
                     dt=rc["dt"], t_final=rc["t_final"], stride=rc["stride"],
                     p=rc["p"], nonlinear=rc["nonlinear"], seed=rc["seed"])


def load_config(path: Optional[str] = None, overrides: Sequence[str] = (),
                seed: Optional[int] = None) -> RunConfig:
    """Load, override, validate; a missing path means the reference run."""
    if path is None:
        user: dict = {}
    else:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from None
    for item in overrides:
        _apply_override(user, item)
    cfg = _merge(user)
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    return _build(cfg)
