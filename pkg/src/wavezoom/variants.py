"""Model variants: which data each one learns and how it reaches the zone fields.

Base kinds:

* ``NN`` / ``NN_BC``: parameters -> all zone fields / boundary trace over time
* ``NN_t`` / ``NN_BC_t``: (parameters, t) -> one time slice
* ``WGAN`` / ``WGAN_BC``: latent vector -> zone fields / boundary trace
* ``POD_RF``: POD of zone snapshots with forest-predicted coordinates
* ``TRUTH``: replays the reference fields (identity oracle)

Appending ``_ZOOM`` (or ``+ZOOM``) feeds the boundary of the output to the
FEM submodel, which produces the zone field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .grid import GridSpec, TimeGrid, gather_boundary, restrict_to_subgrid
from .models import DcnrRegressor, WassersteinGAN, ZoomSubmodel
from .pod import PodRfRegressor

BASE_KINDS = ("NN", "NN_BC", "NN_t", "NN_BC_t", "WGAN", "WGAN_BC", "POD_RF")
PARAMETRIC = ("NN", "NN_BC", "NN_t", "NN_BC_t", "POD_RF")
GENERATIVE = ("WGAN", "WGAN_BC")
BOUNDARY = ("NN_BC", "NN_BC_t", "WGAN_BC")
PER_TIME = ("NN_t", "NN_BC_t", "POD_RF")


class VariantError(ValueError):
    pass


def valid_names():
    return list(BASE_KINDS) + [k + "_ZOOM" for k in BASE_KINDS] + ["TRUTH"]


def parse_variant(name: str) -> tuple[str, bool]:
    """Split ``"NN_BC_ZOOM"`` / ``"NN_BC+ZOOM"`` into ``("NN_BC", True)``."""
    norm = name.replace("+", "_")
    zoom = norm.endswith("_ZOOM")
    base = norm[: -len("_ZOOM")] if zoom else norm
    if base not in BASE_KINDS and base != "TRUTH":
        raise VariantError(f"unknown variant {name!r}; valid: {', '.join(valid_names())}")
    return base, zoom


def zone_fields(fields, domain: GridSpec, zone: GridSpec) -> np.ndarray:
    return restrict_to_subgrid(fields, domain, zone)


def training_data(kind: str, params, zfields, time: TimeGrid, zone: GridSpec):
    """``(X, Y)`` for ``kind`` from parameters ``[n, 3]`` and zone fields ``[n, n_t, ny, nx]``."""
    params = np.asarray(params, dtype=np.float64)
    n, n_t = zfields.shape[:2]
    target = gather_boundary(zfields, zone) if kind in BOUNDARY else zfields
    if kind in PER_TIME:
        t = np.tile(time.times, n)
        X = np.column_stack([np.repeat(params, n_t, axis=0), t])
        Y = target.reshape((n * n_t,) + target.shape[2:])
        if kind == "POD_RF":
            Y = Y.reshape(n * n_t, -1)
        return X, Y
    return params, target


def per_time_inputs(params, time: TimeGrid):
    params = np.asarray(params, dtype=np.float64)
    return np.column_stack([np.repeat(params, time.n_t, axis=0), np.tile(time.times, len(params))])


def make_estimator(kind: str, config: RunConfig, seed: int, jobs: int = 1):
    if kind in ("NN", "NN_BC", "NN_t", "NN_BC_t"):
        h = dict(config.dcnr)
        epochs = h.pop("epochs_t") if kind.endswith("_t") else h["epochs"]
        h.pop("epochs", None)
        h.pop("epochs_t", None)
        h["channels"] = tuple(h.get("channels", (32, 32, 32)))
        return DcnrRegressor(time_channels=not kind.endswith("_t"), epochs=epochs, random_state=seed, **h)
    if kind in GENERATIVE:
        h = dict(config.wgan)
        for key in ("channels", "critic_channels"):
            if key in h:
                h[key] = tuple(h[key])
        return WassersteinGAN(time_channels=True, random_state=seed, **h)
    if kind == "POD_RF":
        p = dict(config.pod)
        weighting = p.pop("weighting", "identity")
        if weighting != "identity":
            raise VariantError(f"unsupported POD weighting {weighting!r}")
        return PodRfRegressor(random_state=seed, n_jobs=jobs, **p)
    raise VariantError(f"cannot train {kind!r}")


def fit_variant(kind: str, params, zfields, config: RunConfig, seed: int, jobs: int = 1):
    est = make_estimator(kind, config, seed, jobs)
    X, Y = training_data(kind, params, zfields, config.time_grid, config.zone_spec)
    if kind in GENERATIVE:
        return est.fit(Y)
    return est.fit(X, Y)


@dataclass
class Variant:
    """A trained base estimator plus the zoom coupling settings."""

    kind: str
    estimator: object
    zone: GridSpec
    time: TimeGrid
    c: float

    @property
    def boundary_output(self) -> bool:
        return self.kind in BOUNDARY

    def native_from_params(self, params) -> np.ndarray:
        """Raw outputs for each parameter vector: ``[n, n_t, ...]``."""
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        n, n_t = len(params), self.time.n_t
        if self.kind in PER_TIME:
            out = self.estimator.predict(per_time_inputs(params, self.time))
            if self.kind == "POD_RF":
                return out.reshape(n, n_t, self.zone.n_y, self.zone.n_x)
            return out.reshape((n, n_t) + out.shape[1:])
        return self.estimator.predict(params)

    def native_from_latent(self, Z) -> np.ndarray:
        return self.estimator.generate(Z)

    def to_zone(self, native, zoom: bool) -> np.ndarray:
        """Zone fields from raw outputs; boundary kinds without zoom stay traces."""
        if zoom:
            traces = native if self.boundary_output else gather_boundary(native, self.zone)
            return ZoomSubmodel(self.zone, self.time, self.c).fit().transform(traces)
        return native

    def predict(self, params, zoom=False):
        return self.to_zone(self.native_from_params(params), zoom)

    def sample(self, Z, zoom=False):
        return self.to_zone(self.native_from_latent(Z), zoom)
