"""Latin hypercube sampling of source parameters and full-model datasets."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import storage
from .config import PARAM_NAMES, RunConfig
from .fem import WaveSolver
from .grid import Grid, GridSpec, TimeGrid

logger = logging.getLogger(__name__)

SPLITS = ("train", "test", "mc")


def lhs_sample(n: int, bounds, seed) -> np.ndarray:
    """``[n, d]`` Latin hypercube sample inside ``bounds = [(lo, hi), ...]``.

    Each axis is cut into ``n`` equal strata holding exactly one point,
    placed uniformly inside its stratum.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or not (bounds[:, 0] < bounds[:, 1]).all():
        raise ValueError(f"invalid bounds {bounds.tolist()}")
    rng = np.random.default_rng(seed)
    d = len(bounds)
    u = np.empty((n, d))
    for k in range(d):
        u[:, k] = (rng.permutation(n) + rng.random(n)) / n
    return bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0])


def source_in_zone(x_s: float, y_s: float, domain: GridSpec, zone: GridSpec) -> bool:
    """True if the source point or its nearest node touches the closed zone."""
    i, j = Grid(domain).nearest_node(x_s, y_s)
    xn, yn = domain.x_min + i * domain.dx, domain.y_min + j * domain.dy
    tol = 1e-12
    return any(
        zone.x_min - tol <= x <= zone.x_max + tol and zone.y_min - tol <= y <= zone.y_max + tol
        for x, y in ((x_s, y_s), (xn, yn))
    )


@dataclass
class Dataset:
    split: str
    seed: int
    config: dict
    params: np.ndarray
    fields: np.ndarray
    rejected: list = field(default_factory=list)

    def __len__(self):
        return len(self.params)

    @property
    def domain(self) -> GridSpec:
        return GridSpec.from_dict(self.config["domain"])

    @property
    def zone(self) -> GridSpec:
        return GridSpec.from_dict(self.config["zone"])

    @property
    def time(self) -> TimeGrid:
        return TimeGrid(self.config["time"]["n_t"], self.config["time"]["dt"])

    def manifest(self) -> dict:
        return {
            "kind": "dataset",
            "split": self.split,
            "seed": self.seed,
            "config": self.config,
            "n_samples": len(self),
            "param_names": list(PARAM_NAMES),
            "samples": [dict(zip(PARAM_NAMES, map(float, p))) for p in self.params],
            "rejected": self.rejected,
        }

    def save(self, directory) -> str:
        arrays = {"params.f64": self.params.reshape(len(self), 3)}
        for k, f in enumerate(self.fields):
            arrays[f"fields/{k}.f64"] = f
        return storage.save_container(directory, self.manifest(), arrays)

    @classmethod
    def load(cls, directory) -> "Dataset":
        manifest, arrays = storage.load_container(directory)
        if manifest.get("kind") != "dataset":
            raise storage.FormatError(f"{directory} is not a dataset container")
        n = manifest["n_samples"]
        cfg = manifest["config"]
        shape = (cfg["time"]["n_t"], cfg["domain"]["n_y"], cfg["domain"]["n_x"])
        params = arrays["params.f64"]
        if params.shape != (n, 3):
            raise storage.FormatError(f"params shape {params.shape} != {(n, 3)}")
        fields_ = np.empty((n,) + shape)
        for k in range(n):
            f = arrays[f"fields/{k}.f64"]
            if f.shape != shape:
                raise storage.FormatError(f"field {k} shape {f.shape} != {shape}")
            fields_[k] = f
        return cls(manifest["split"], manifest["seed"], cfg, params, fields_, manifest.get("rejected", []))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.manifest() == other.manifest()
            and np.array_equal(self.params, other.params)
            and np.array_equal(self.fields, other.fields)
        )


_WORKER_SOLVER = None


def _init_worker(spec_dict, n_t, dt, c):
    global _WORKER_SOLVER
    _WORKER_SOLVER = WaveSolver(GridSpec.from_dict(spec_dict), TimeGrid(n_t, dt), c)


def _solve_one(p):
    return _WORKER_SOLVER.solve(*p)


def generate_dataset(split: str, config: RunConfig, seed=None, n=None, jobs: int = 1) -> Dataset:
    """Sample parameters for ``split`` and solve the full model for each.

    Samples whose source falls in the zone of interest (when exclusion is
    on) are dropped and listed in ``Dataset.rejected``; nothing is resampled.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    config.validate()
    seed = config.seeds[split] if seed is None else seed
    n = config.sizes[split] if n is None else n
    domain, zone, time = config.domain_spec, config.zone_spec, config.time_grid
    params = lhs_sample(n, config.param_bounds(), seed) if n > 0 else np.empty((0, 3))

    kept, rejected = [], []
    for k, p in enumerate(params):
        if config.exclusion and source_in_zone(p[1], p[2], domain, zone):
            rejected.append({"index": k, **dict(zip(PARAM_NAMES, map(float, p)))})
            logger.warning("rejecting sample %d: source (%.4g, %.4g) touches the zone of interest", k, p[1], p[2])
        else:
            kept.append(p)
    params = np.array(kept).reshape(-1, 3)

    init = (domain.to_dict(), time.n_t, time.dt, float(config.c))
    if jobs > 1 and len(params) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=init) as ex:
            fields_ = list(ex.map(_solve_one, params, chunksize=max(1, len(params) // (4 * jobs))))
    else:
        _init_worker(*init)
        fields_ = [_solve_one(p) for p in params]
    fields_ = np.array(fields_).reshape((len(params), time.n_t, domain.n_y, domain.n_x))
    return Dataset(split, int(seed), config.physics_snapshot(), params, fields_, rejected)


def save(dataset: Dataset, directory) -> str:
    return dataset.save(directory)


def load(directory) -> Dataset:
    return Dataset.load(directory)
