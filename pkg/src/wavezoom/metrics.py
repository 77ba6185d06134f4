"""Error, energy, discrepancy and amplitude indicators on the zone of interest.

Fields are ``[n_t, n_y, n_x]`` trajectories (or stacks of them with a
leading sample axis). Time indices whose reference maximum is negligible
compared with the whole trajectory are skipped and reported as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SKIP_REL = 1e-8


@dataclass
class Curve:
    """Per-time indicator values; ``skipped[t]`` marks undefined entries (NaN)."""

    values: np.ndarray
    skipped: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return self.values[~self.skipped]

    def median(self) -> float:
        d = self.defined
        return float(np.median(d)) if d.size else float("nan")

    def mean(self) -> float:
        d = self.defined
        return float(np.mean(d)) if d.size else float("nan")


def _space_axes(a):
    return tuple(range(a.ndim - 2, a.ndim))


def _relative_curve(numer, denom, what):
    """``numer / denom`` per time with the near-zero denominator guard."""
    top = float(np.max(denom)) if denom.size else 0.0
    if top <= 0:
        raise ValueError(f"{what}: reference is identically zero, indicator undefined")
    skipped = denom < SKIP_REL * top
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(skipped, np.nan, numer / np.where(skipped, 1.0, denom))
    return Curve(values, skipped)


def epsilon(M, U, t=None):
    """Mean absolute error over space divided by the max of ``|U|`` over space.

    With ``t=None`` both arguments are single-time maps. Otherwise they are
    trajectories and the value at index ``t`` is returned (NaN if that time
    is skipped).
    """
    M, U = np.asarray(M, dtype=np.float64), np.asarray(U, dtype=np.float64)
    if M.shape != U.shape:
        raise ValueError(f"shape mismatch {M.shape} vs {U.shape}")
    if t is None:
        den = np.abs(U).max()
        if den <= 0:
            raise ValueError("epsilon: reference map is identically zero")
        return float(np.abs(M - U).mean() / den)
    return float(epsilon_curve(M, U).values[t])


def epsilon_curve(M, U) -> Curve:
    M, U = np.asarray(M, dtype=np.float64), np.asarray(U, dtype=np.float64)
    if M.shape != U.shape:
        raise ValueError(f"shape mismatch {M.shape} vs {U.shape}")
    ax = _space_axes(U)
    return _relative_curve(np.abs(M - U).mean(axis=ax), np.abs(U).max(axis=ax), "epsilon")


def epsilon_aggregate(M_samples, U_samples) -> Curve:
    """Mean over samples of per-sample epsilon curves.

    At each time the mean runs over samples where that time is defined; a
    time skipped by every sample stays skipped.
    """
    M_samples, U_samples = np.asarray(M_samples), np.asarray(U_samples)
    if len(M_samples) == 0:
        raise ValueError("epsilon_aggregate needs at least one sample")
    if M_samples.shape != U_samples.shape:
        raise ValueError(f"shape mismatch {M_samples.shape} vs {U_samples.shape}")
    curves = [epsilon_curve(m, u) for m, u in zip(M_samples, U_samples)]
    vals = np.array([c.values for c in curves])
    skipped = np.array([c.skipped for c in curves]).all(axis=0)
    ok = ~np.isnan(vals)
    total = np.where(ok, vals, 0.0).sum(axis=0)
    count = ok.sum(axis=0)
    mean = np.where(skipped, np.nan, total / np.maximum(count, 1))
    return Curve(mean, skipped)


def kinetic_energy(field, dt: float, mass: float = 1.0) -> np.ndarray:
    """Pointwise ``mass/2 * ((u_i - u_{i-1}) / dt)^2`` for ``i >= 1``.

    The time axis is the third from last; the result has one entry fewer
    along it (the initial time has no backward difference).
    """
    u = np.asarray(field, dtype=np.float64)
    if u.shape[-3] < 2:
        raise ValueError("kinetic energy needs at least two time steps")
    v = np.diff(u, axis=-3) / dt
    return 0.5 * mass * v * v


def training_mean(fields) -> np.ndarray:
    return np.asarray(fields, dtype=np.float64).mean(axis=0)


def training_std(fields) -> np.ndarray:
    f = np.asarray(fields, dtype=np.float64)
    return np.sqrt(((f - f.mean(axis=0)) ** 2).mean(axis=0))


def discrepancy(samples, mean_train) -> np.ndarray:
    """Pointwise root-mean-square deviation of samples from the training mean."""
    s = np.asarray(samples, dtype=np.float64)
    if len(s) == 0:
        raise ValueError("discrepancy needs at least one draw")
    return np.sqrt(((s - np.asarray(mean_train)) ** 2).mean(axis=0))


def discrepancy_rel_curve(sigma, sigma_train) -> Curve:
    """Mean over space of ``|sigma - sigma_train|`` over the max of ``sigma_train``, per time."""
    sigma, sigma_train = np.asarray(sigma, dtype=np.float64), np.asarray(sigma_train, dtype=np.float64)
    if sigma.shape != sigma_train.shape:
        raise ValueError(f"shape mismatch {sigma.shape} vs {sigma_train.shape}")
    ax = _space_axes(sigma_train)
    den = sigma_train.max(axis=ax)
    numer = np.abs(sigma - sigma_train).mean(axis=ax)
    if float(den.max()) <= 0:
        return Curve(np.full(den.shape, np.nan), np.ones(den.shape, dtype=bool))
    return _relative_curve(numer, den, "discrepancy_rel")


def discrepancy_rel(sigma, sigma_train, t) -> float:
    return float(discrepancy_rel_curve(sigma, sigma_train).values[t])


def max_amplitude(field) -> np.ndarray:
    """Pointwise range over time, ``|max_t u - min_t u|``."""
    u = np.asarray(field, dtype=np.float64)
    return np.abs(u.max(axis=-3) - u.min(axis=-3))


@dataclass
class AmplitudeHistogram:
    edges: np.ndarray
    counts: dict  # source -> int array

    def rows(self):
        for source in self.counts:
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts[source]):
                yield source, float(lo), float(hi), int(c)


def amplitude_histogram(per_source: dict, bins: int = 20) -> AmplitudeHistogram:
    """Histograms of per-sample amplitude scalars on shared bin edges."""
    allv = np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in per_source.values()])
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts = {k: np.histogram(np.asarray(v).ravel(), edges)[0] for k, v in per_source.items()}
    return AmplitudeHistogram(edges, counts)
