"""Run configuration with defaults for the reference setup.

Defaults: full domain [-8, 8] x [-4, 4] m on 40 x 20 nodes, zone of interest
with half-extents 4 x 2 m, 100 time steps of 4e-5 s, wave speed 2000 m/s.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

from .grid import GridSpec, TimeGrid


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


PARAM_NAMES = ("omega", "x_s", "y_s")

GRID_MODES = {
    "standard": {"x_min": -8.0, "x_max": 8.0, "y_min": -4.0, "y_max": 4.0, "n_x": 40, "n_y": 20},
    # dx = dy = 0.4 so the default zone boundary falls on domain nodes
    "aligned": {"x_min": -8.0, "x_max": 8.0, "y_min": -4.0, "y_max": 4.0, "n_x": 41, "n_y": 21},
}


def _default_dcnr():
    return {
        "epochs": 1000,
        "epochs_t": 20,
        "batch_size": 16,
        "lr": 3e-3,
        "lr_final": 1e-5,
        "beta1": 0.9,
        "beta2": 0.999,
        "hidden": 256,
        "channels": [32, 32, 32],
    }


def _default_wgan():
    return {
        "epochs": 200,
        "batch_size": 16,
        "lr": 1e-4,
        "beta1": 0.0,
        "beta2": 0.9,
        "lambda_gp": 10.0,
        "n_critic": 5,
        "latent_dim": 32,
        "hidden": 256,
        "channels": [32, 32, 32],
        "critic_channels": [8, 16, 32],
    }


def _default_pod():
    return {"energy_tol": 1e-6, "n_trees": 100, "min_leaf": 2, "bootstrap_ratio": 1.0, "weighting": "identity"}


@dataclass
class RunConfig:
    mode: str = "standard"
    domain: dict | None = None
    zone: dict = field(default_factory=lambda: {"center": [3.2, 0.0], "half_extents": [4.0, 2.0], "n_x": 21, "n_y": 11})
    time: dict = field(default_factory=lambda: {"n_t": 100, "dt": 4e-5})
    c: float = 2000.0
    bounds: dict = field(
        default_factory=lambda: {"omega": [4750.0, 5250.0], "x_s": [-2.2, -1.5], "y_s": [-1.8, 0.5]}
    )
    exclusion: bool = True
    sizes: dict = field(default_factory=lambda: {"train": 100, "test": 10, "mc": 1000})
    seeds: dict = field(default_factory=lambda: {"train": 1, "test": 2, "mc": 3, "models": 0, "uq": 4})
    dcnr: dict = field(default_factory=_default_dcnr)
    wgan: dict = field(default_factory=_default_wgan)
    pod: dict = field(default_factory=_default_pod)
    uq: dict = field(default_factory=lambda: {"n_z": 1000, "bins": 20})
    output_dir: str = "wavezoom_run"

    @property
    def domain_spec(self) -> GridSpec:
        d = dict(GRID_MODES[self.mode])
        d.update(self.domain or {})
        return GridSpec.from_dict(d)

    @property
    def zone_spec(self) -> GridSpec:
        z = self.zone
        return GridSpec.centered(z["center"], z["half_extents"], int(z["n_x"]), int(z["n_y"]))

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(int(self.time["n_t"]), float(self.time["dt"]))

    def param_bounds(self):
        return [tuple(self.bounds[k]) for k in PARAM_NAMES]

    def problems(self) -> list[str]:
        """Every validation failure, not just the first."""
        out = []
        if self.mode not in GRID_MODES:
            out.append(f"mode: must be one of {sorted(GRID_MODES)}, got {self.mode!r}")
            return out
        specs = {}
        for name, getter in (("domain", lambda: self.domain_spec), ("zone", lambda: self.zone_spec), ("time", lambda: self.time_grid)):
            try:
                specs[name] = getter()
            except (ValueError, KeyError, TypeError) as exc:
                out.append(f"{name}: {exc}")
        if not self.c > 0:
            out.append(f"c: wave speed must be positive, got {self.c}")
        for k in PARAM_NAMES:
            b = self.bounds.get(k)
            if b is None or len(b) != 2:
                out.append(f"bounds.{k}: expected [min, max]")
            elif not b[0] < b[1]:
                out.append(f"bounds.{k}: min {b[0]} must be < max {b[1]}")
        for k in ("train", "test", "mc"):
            n = self.sizes.get(k)
            if not isinstance(n, int) or n < 0:
                out.append(f"sizes.{k}: expected a non-negative integer, got {n!r}")
        if "domain" in specs and "zone" in specs:
            dom, zone = specs["domain"], specs["zone"]
            if not dom.contains(zone):
                out.append("zone: zone of interest is not contained in the domain")
            if self.exclusion and not any(p.startswith("bounds") for p in out):
                (x0, x1), (y0, y1) = self.bounds["x_s"], self.bounds["y_s"]
                if x0 <= zone.x_max and x1 >= zone.x_min and y0 <= zone.y_max and y1 >= zone.y_min:
                    out.append("bounds: source box intersects the zone of interest while exclusion is on")
            if not any(p.startswith("bounds") for p in out):
                (x0, x1), (y0, y1) = self.bounds["x_s"], self.bounds["y_s"]
                if not (dom.x_min < x0 and x1 < dom.x_max and dom.y_min < y0 and y1 < dom.y_max):
                    out.append("bounds: source box must lie strictly inside the domain")
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError([f"unknown config key {k!r}" for k in sorted(unknown)])
        base = cls()
        kwargs = {}
        for k, v in d.items():
            default = getattr(base, k)
            if isinstance(default, dict) and isinstance(v, dict):
                merged = copy.deepcopy(default)
                merged.update(v)
                kwargs[k] = merged
            else:
                kwargs[k] = v
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
        return cls.from_dict(raw)

    def physics_snapshot(self) -> dict:
        """The part of the config that determines stored fields."""
        return {
            "domain": self.domain_spec.to_dict(),
            "zone": self.zone_spec.to_dict(),
            "time": {"n_t": self.time_grid.n_t, "dt": self.time_grid.dt},
            "c": float(self.c),
            "bounds": {k: list(map(float, self.bounds[k])) for k in PARAM_NAMES},
            "exclusion": bool(self.exclusion),
        }
