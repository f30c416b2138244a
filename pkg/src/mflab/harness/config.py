"""Experiment configuration: JSON with a versioned schema and strict keys."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..potentials import BUILTIN_NAMES, builtin_potential
from ..quantum import DEFAULT_AMPLITUDE_CAP, ResourceCapError
from ..sampling import DENSITY_NAMES, ReferenceDensity

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "config_hash",
    "default_config",
]

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "klimontovich_equivalence",
    "dobrushin",
    "fournier_guillin",
    "quantum_meanfield",
    "klimontovich_quantum",
    "wigner_husimi_suite",
    "pseudo_distance_suite",
    "joint_limit",
)

TOP_KEYS = {"schema", "experiment", "seed", "potential", "density", "d", "n_list", "grid", "scale",
            "t_end", "dt", "trials", "snapshots", "output_dir", "options"}


class ConfigError(ValueError):
    pass


_TWO_PI = 2 * np.pi

# Per-experiment defaults; a config only needs "schema" and "experiment".
DEFAULTS = {
    "klimontovich_equivalence": dict(
        potential={"name": "gaussian", "params": [1.0, 1.0]}, d=3, n_list=[64], t_end=1.0, dt=1e-3,
        snapshots=10, density={"name": "gaussian_phase", "params": {"sigma": 1.0}},
        options={"tolerance": 1e-8, "energy_drift_tol": 1e-6}),
    "dobrushin": dict(
        potential={"name": "gaussian", "params": [1.0, 1.0]}, d=3, n_list=[128], t_end=1.0, dt=2e-3,
        trials=100, snapshots=10, density={"name": "gaussian_phase", "params": {"sigma": 1.0}},
        options={"slack": 1e-6, "shift": 0.5, "spread": [0.7, 1.3]}),
    "fournier_guillin": dict(
        d=3, n_list=[64, 128, 256, 512, 1024, 2048, 4096], trials=20,
        density={"name": "gaussian_phase", "params": {"sigma": 1.0}, "q": 3},
        options={"estimator": "two_sample", "q_envelope": 8.0, "slope_max": -0.10, "n_stderr": 2.0,
                 "ref_factor": 20}),
    "quantum_meanfield": dict(
        potential={"name": "cosine", "params": [1.0, _TWO_PI]}, d=1, n_list=[2, 3, 4],
        grid={"M": 32, "L": _TWO_PI}, scale=1.0, t_end=0.5, dt=1e-3,
        options={"packet": [0.0, 0.5, 0.5], "monotone_slack": 1e-3, "norm_tol": 1e-10,
                 "energy_drift_tol": 1e-6, "amplitude_cap": DEFAULT_AMPLITUDE_CAP}),
    "klimontovich_quantum": dict(
        potential={"name": "cosine", "params": [1.0, _TWO_PI]}, d=1, n_list=[2, 3],
        grid={"M": 32, "L": _TWO_PI}, scale=1.0, t_end=0.5, dt=1e-3, trials=20,
        options={"duality_tol": 1e-10, "residual_observables": 5, "residual_steps": 40,
                 "bracket_tol": 1e-10, "amplitude_cap": DEFAULT_AMPLITUDE_CAP}),
    "wigner_husimi_suite": dict(
        d=1, trials=50,
        options={"eps_list": [0.1, 0.5, 1.0], "value_rtol": 1e-3, "mass_tol": 1e-6, "husimi_floor": -1e-10,
                 "husimi_mass_tol": 1e-8, "coherent_tol": 1e-6, "toeplitz_floor": -1e-12}),
    "pseudo_distance_suite": dict(
        d=1, trials=10, grid={"M": 128, "L": 16.0},
        options={"pinned_eps": [0.1, 0.5], "pinned_points": [[0.0, 0.0], [0.5, -0.3]], "pinned_tol": 1e-4,
                 "sandwich_eps": 0.5, "atoms": 48, "husimi_cap": 2500}),
    "joint_limit": dict(
        potential={"name": "cosine", "params": [1.0, 2 * _TWO_PI, 2]}, d=1, n_list=[3],
        grid={"M": 64, "L": 2 * _TWO_PI}, scale=0.5, t_end=0.5, dt=2.5e-3, trials=32,
        density={"name": "gaussian_phase", "params": {"sigma": 0.7}},
        options={"batches": 4, "classical_atoms": 256, "classical_dt": 1e-3, "husimi_cap": 2500,
                 "n_stderr": 2.0, "box_doubling": False, "amplitude_cap": DEFAULT_AMPLITUDE_CAP}),
}

COMMON = dict(seed=20240601, scale=1.0, t_end=1.0, dt=1e-3, trials=1, snapshots=10, d=1, n_list=[1],
              grid=None, potential=None, density=None, output_dir="mflab-out", options={})


@dataclass(frozen=True)
class ExperimentConfig:
    schema: int
    experiment: str
    seed: int
    potential: dict | None
    density: dict | None
    d: int
    n_list: list
    grid: dict | None
    scale: float
    t_end: float
    dt: float
    trials: int
    snapshots: int
    output_dir: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in sorted(TOP_KEYS)}

    def build_potential(self):
        if self.potential is None:
            raise ConfigError(f"experiment {self.experiment} needs a potential")
        return builtin_potential(self.potential["name"], self.potential.get("params", []), self.d)

    def build_density(self) -> ReferenceDensity:
        if self.density is None:
            raise ConfigError(f"experiment {self.experiment} needs a density")
        return ReferenceDensity(self.density["name"], self.d, dict(self.density.get("params", {})),
                                float(self.density.get("q", 3.0)))

    def replace(self, **kw) -> "ExperimentConfig":
        data = self.to_dict()
        data.update(kw)
        return parse_config(data)


def default_config(experiment: str) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    data = copy.deepcopy(COMMON)
    data.update(copy.deepcopy(DEFAULTS[experiment]))
    data["schema"] = SCHEMA_VERSION
    data["experiment"] = experiment
    return data


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping and fill in per-experiment defaults."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    _require(raw.get("schema") == SCHEMA_VERSION,
             f"unsupported schema {raw.get('schema')!r}; expected {SCHEMA_VERSION}")
    exp = raw.get("experiment")
    _require(exp in EXPERIMENTS, f"unknown experiment {exp!r}; choose from {list(EXPERIMENTS)}")
    data = default_config(exp)
    opts = data["options"]
    for k, v in raw.items():
        if k == "options":
            _require(isinstance(v, dict), "options must be an object")
            bad = set(v) - set(opts)
            _require(not bad, f"unknown options for {exp}: {sorted(bad)}")
            opts.update(copy.deepcopy(v))
        else:
            data[k] = copy.deepcopy(v)

    _require(isinstance(data["seed"], int) and 0 <= data["seed"] < 2**64, "seed must be a 64-bit unsigned integer")
    _require(isinstance(data["d"], int) and data["d"] >= 1, "d must be a positive integer")
    nl = data["n_list"]
    _require(isinstance(nl, list) and nl and all(isinstance(n, int) and n >= 1 for n in nl),
             "n_list must be a nonempty list of positive integers")
    _require(all(b > a for a, b in zip(nl, nl[1:])), "n_list must be increasing")
    for key in ("scale", "t_end", "dt"):
        _require(isinstance(data[key], (int, float)) and data[key] > 0 or (key == "t_end" and data[key] == 0),
                 f"{key} must be a positive number")
    _require(isinstance(data["trials"], int) and data["trials"] >= 1, "trials must be a positive integer")
    _require(isinstance(data["snapshots"], int) and data["snapshots"] >= 1, "snapshots must be a positive integer")
    _require(isinstance(data["output_dir"], str), "output_dir must be a string")

    pot = data["potential"]
    if pot is not None:
        _require(isinstance(pot, dict) and set(pot) <= {"name", "params"} and "name" in pot,
                 "potential must be {name, params}")
        _require(pot["name"] in BUILTIN_NAMES, f"unknown potential {pot['name']!r}")
        try:
            builtin_potential(pot["name"], pot.get("params", []), data["d"])
        except ValueError as exc:
            raise ConfigError(f"invalid potential: {exc}") from None
    dens = data["density"]
    if dens is not None:
        _require(isinstance(dens, dict) and set(dens) <= {"name", "params", "q"} and "name" in dens,
                 "density must be {name, params, q}")
        _require(dens["name"] in DENSITY_NAMES, f"unknown density {dens['name']!r}")
        try:
            ReferenceDensity(dens["name"], data["d"], dict(dens.get("params", {})), float(dens.get("q", 3.0)))
        except ValueError as exc:
            raise ConfigError(f"invalid density: {exc}") from None
    grid = data["grid"]
    if grid is not None:
        _require(isinstance(grid, dict) and set(grid) == {"M", "L"}, "grid must be {M, L}")
        m = grid["M"]
        _require(isinstance(m, int) and m >= 2 and m & (m - 1) == 0, "grid.M must be a power of two")
        _require(isinstance(grid["L"], (int, float)) and grid["L"] > 0, "grid.L must be positive")

    if exp == "fournier_guillin":
        _require(data["trials"] >= 5, "fournier_guillin needs at least 5 trials")
        _require(data["d"] >= 3, "fournier_guillin needs d >= 3")
    if exp in ("quantum_meanfield", "klimontovich_quantum", "joint_limit", "pseudo_distance_suite"):
        _require(data["d"] == 1, f"{exp} runs on one-dimensional grids")
    cfg = ExperimentConfig(**data)
    _check_memory(cfg)
    return cfg


def _check_memory(cfg: ExperimentConfig) -> None:
    cap = cfg.options.get("amplitude_cap")
    if cap is None or cfg.grid is None:
        return
    n_amp = cfg.grid["M"] ** max(cfg.n_list)
    if n_amp > cap:
        raise ResourceCapError(f"{cfg.experiment}: {n_amp} amplitudes exceed the cap {cap}")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of the config; the output directory is excluded."""
    data = cfg.to_dict()
    data.pop("output_dir")
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()
