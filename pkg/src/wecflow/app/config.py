"""Run configuration read from YAML.

Every section and key is optional; missing values take the defaults below.
Relative paths are resolved against the directory of the config file.

.. code-block:: yaml

    sea: {Hs: 2.12, Te: 8.0, beta: 0.0, depth: 30.0}
    device: {radius: 2.0, draft: 0.5, mass: null, k_hydro: null}
    park: {n_bodies: 10, layout: grid, c0: 1.0e4, kappa0: 0.0, jitter: 0.0}
    model: {n_freq: 5, n_prog: 3, n_evan: 8, neglect_fraction: 0.02,
            coefficients: null, synth_seed: 0, synth_coupling: 0.1}
    constraints: {alpha: 1.0, d_min: 10.0, mesh: meshes/cut_square.mesh,
                  eta_smooth: null}
    solver: {preset: S4, tau_psi: 1.0e-3, t_max: 1000.0, overrides: {}}
    scaling: {length: null, damping: null, stiffness: null, amplitude: null,
              slack_sl: null, slack_ad: null, slack_md: null, f0: null}
    paths: {cache_dir: cache, out_dir: out}
    seed: 0
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..flow import MODES, FlowSettings, preset


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULTS = {
    "sea": {"Hs": 2.12, "Te": 8.0, "beta": 0.0, "depth": 30.0},
    "device": {"radius": 2.0, "draft": 0.5, "mass": None, "k_hydro": None},
    "park": {"n_bodies": 10, "layout": "grid", "c0": 1.0e4, "kappa0": 0.0, "jitter": 0.0},
    "model": {"n_freq": 5, "n_prog": 3, "n_evan": 8, "neglect_fraction": 0.02,
              "coefficients": None, "synth_seed": 0, "synth_coupling": 0.1},
    "constraints": {"alpha": 1.0, "d_min": 10.0, "mesh": "builtin:cut-square",
                    "mesh_h": 1.25, "eta_smooth": None},
    "solver": {"preset": "S4", "tau_psi": 1.0e-3, "t_max": 1000.0, "overrides": {}},
    "scaling": {"length": None, "damping": None, "stiffness": None, "amplitude": None,
                "slack_sl": None, "slack_ad": None, "slack_md": None, "f0": None},
    "paths": {"cache_dir": "cache", "out_dir": "out"},
    "seed": None,
}

POSITIVE = {
    "sea": ("Hs", "Te", "depth"),
    "device": ("radius", "draft", "mass", "k_hydro"),
    "park": ("n_bodies",),
    "model": ("n_freq",),
    "constraints": ("alpha", "d_min", "mesh_h", "eta_smooth"),
    "solver": ("tau_psi", "t_max"),
    "scaling": ("length", "damping", "stiffness", "amplitude", "slack_sl", "slack_ad",
                "slack_md", "f0"),
}


def _merge(base, extra, where=""):
    out = copy.deepcopy(base)
    for key, val in (extra or {}).items():
        if key not in base:
            raise ConfigError(f"unknown key {where}{key!r}")
        if isinstance(base[key], dict) and key != "overrides":
            if not isinstance(val, dict):
                raise ConfigError(f"section {where}{key!r} must be a mapping")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    """Validated run configuration; sections are plain dictionaries."""

    sea: dict
    device: dict
    park: dict
    model: dict
    constraints: dict
    solver: dict
    scaling: dict
    paths: dict
    seed: int | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data, base_dir=None):
        merged = _merge(DEFAULTS, data or {})
        cfg = cls(**merged, base_dir=Path(base_dir or Path.cwd()))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data, path.parent)

    def validate(self):
        for section, keys in POSITIVE.items():
            for key in keys:
                val = getattr(self, section)[key]
                if val is None:
                    continue
                if not isinstance(val, (int, float)) or not val > 0:
                    raise ConfigError(f"{section}.{key} must be a positive number, got {val!r}")
        for key in ("n_prog", "n_evan"):
            val = self.model[key]
            if not isinstance(val, int) or val < 0:
                raise ConfigError(f"model.{key} must be a non-negative integer")
        if self.solver["preset"] not in MODES:
            raise ConfigError(f"solver.preset must be one of {MODES}")
        layout = self.park["layout"]
        if layout not in ("grid", "admissible-grid"):
            if not isinstance(layout, list) or len(layout) != self.park["n_bodies"]:
                raise ConfigError("park.layout must be 'grid', 'admissible-grid' or a list "
                                  "of n_bodies [x, y] pairs")
        self.flow_settings()

    def resolve(self, value):
        """Absolute path for a config-relative path string."""
        p = Path(value)
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def seed_value(self):
        return self.model["synth_seed"] if self.seed is None else self.seed

    def flow_settings(self, preset_name=None):
        name = preset_name or self.solver["preset"]
        kw = dict(tau_psi=self.solver["tau_psi"], t_max=self.solver["t_max"],
                  tau_cg_floor=1e-10)
        kw.update(self.solver.get("overrides") or {})
        try:
            return preset(name, **kw)
        except TypeError as exc:
            raise ConfigError(f"invalid solver override: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in DEFAULTS}


__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "FlowSettings"]
