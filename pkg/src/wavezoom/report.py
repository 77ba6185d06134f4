"""CSV, SVG and JSON report writers for evaluation and Monte-Carlo studies.

Everything written here is a deterministic function of the input arrays:
floats are printed with a fixed format, JSON keys are sorted and no
timestamps are recorded, so two runs with the same seeds produce identical
bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from . import metrics
from .grid import GridSpec, gather_boundary

# -- formatting -----------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else format(v, ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def bundle_hash(directory) -> str:
    """SHA-256 over every file below ``directory`` (relative path + bytes)."""
    h = hashlib.sha256()
    root = Path(directory)
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode() + b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


# -- SVG ------------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f")
W, H, PAD = 640, 400, 60


def _n(v) -> str:
    return format(float(v), ".2f")


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _frame(title, body, height=H) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}">\n'
        f'<rect width="{W}" height="{height}" fill="white"/>\n'
        f'<text x="{W / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{_esc(title)}</text>\n'
        f"{body}</svg>\n"
    )


def _range(values):
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        hi = lo + (abs(lo) or 1.0)
    return lo, hi


def _axes(x_lo, x_hi, y_lo, y_hi, xlabel, ylabel) -> str:
    x0, x1, y0, y1 = PAD, W - 20, H - PAD, 40
    out = [f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>']
    for k in range(5):
        f = k / 4
        xv, yv = x_lo + f * (x_hi - x_lo), y_lo + f * (y_hi - y_lo)
        xp, yp = x0 + f * (x1 - x0), y0 - f * (y0 - y1)
        out.append(f'<text x="{_n(xp)}" y="{y0 + 16}" text-anchor="middle" font-size="10" font-family="sans-serif">{xv:.3g}</text>')
        out.append(f'<text x="{x0 - 4}" y="{_n(yp + 3)}" text-anchor="end" font-size="10" font-family="sans-serif">{yv:.3g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2}" y="{H - 18}" text-anchor="middle" font-size="12" font-family="sans-serif">{_esc(xlabel)}</text>')
    out.append(f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 14 {(y0 + y1) / 2})">{_esc(ylabel)}</text>')
    return "\n".join(out) + "\n"


def _to_px(x, y, x_lo, x_hi, y_lo, y_hi):
    x0, x1, y0, y1 = PAD, W - 20, H - PAD, 40
    return x0 + (x - x_lo) / (x_hi - x_lo) * (x1 - x0), y0 - (y - y_lo) / (y_hi - y_lo) * (y0 - y1)


def line_svg(path, series: dict, title, xlabel="time index", ylabel="value") -> None:
    """One polyline per named series of ``(x, y)``; NaN values break the line."""
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()]) if series else np.zeros(1)
    x_lo, x_hi = _range(xs)
    y_lo, y_hi = _range(ys)
    body = [_axes(x_lo, x_hi, y_lo, y_hi, xlabel, ylabel)]
    for k, (name, (x, y)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        runs, cur = [], []
        for xv, yv in zip(x, y):
            if np.isfinite(yv):
                cur.append(_to_px(xv, yv, x_lo, x_hi, y_lo, y_hi))
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in run)
            body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>\n')
        body.append(f'<text x="{PAD + 8}" y="{56 + 14 * k}" fill="{color}" font-size="11" font-family="sans-serif">{_esc(name)}</text>\n')
    Path(path).write_text(_frame(title, "".join(body)))


def heatmap_svg(path, grid, title) -> None:
    """Map ``grid[j, i]`` (row 0 at the bottom) to a blue-to-red cell image."""
    g = np.asarray(grid, dtype=np.float64)
    lo, hi = _range(g)
    ny, nx = g.shape
    cell = min((W - 2 * PAD) / nx, (H - 100) / ny)
    ox, oy = (W - cell * nx) / 2, 40
    body = []
    for j in range(ny):
        for i in range(nx):
            v = g[j, i]
            f = 0.0 if not np.isfinite(v) else (v - lo) / (hi - lo)
            r, b = int(round(255 * f)), int(round(255 * (1 - f)))
            y = oy + (ny - 1 - j) * cell
            body.append(f'<rect x="{_n(ox + i * cell)}" y="{_n(y)}" width="{_n(cell)}" height="{_n(cell)}" fill="rgb({r},64,{b})"/>\n')
    foot = oy + ny * cell + 20
    body.append(f'<text x="{W / 2}" y="{_n(foot)}" text-anchor="middle" font-size="11" font-family="sans-serif">min {lo:.4g}  max {hi:.4g}</text>\n')
    Path(path).write_text(_frame(title, "".join(body), height=int(foot + 20)))


def histogram_svg(path, edges, counts: dict, title, xlabel="maximum amplitude") -> None:
    """Step outlines sharing ``edges``, one per source."""
    edges = np.asarray(edges, dtype=np.float64)
    top = max([int(np.max(c)) for c in counts.values()] + [1])
    x_lo, x_hi = float(edges[0]), float(edges[-1])
    body = [_axes(x_lo, x_hi, 0.0, float(top), xlabel, "count")]
    for k, (name, c) in enumerate(counts.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = [_to_px(edges[0], 0, x_lo, x_hi, 0, top)]
        for a, b, n in zip(edges[:-1], edges[1:], c):
            pts += [_to_px(a, n, x_lo, x_hi, 0, top), _to_px(b, n, x_lo, x_hi, 0, top)]
        pts.append(_to_px(edges[-1], 0, x_lo, x_hi, 0, top))
        body.append(f'<polyline points="{" ".join(f"{_n(a)},{_n(b)}" for a, b in pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>\n')
        body.append(f'<text x="{PAD + 8}" y="{56 + 14 * k}" fill="{color}" font-size="11" font-family="sans-serif">{_esc(name)}</text>\n')
    Path(path).write_text(_frame(title, "".join(body)))


# -- shared helpers --------------------------------------------------------------


def as_maps(samples):
    """View boundary traces ``[..., n_t, n_b]`` as ``[..., n_t, 1, n_b]`` maps."""
    return samples[..., None, :]


def curve_rows(name, curve: metrics.Curve, offset=0):
    return [(name, t + offset, v, s) for t, (v, s) in enumerate(zip(curve.values, curve.skipped))]


# -- test-set evaluation ---------------------------------------------------------


def evaluate_report(predictions: dict, outdir, dt: float) -> dict:
    """Error curves and maps for each variant against test-set truth.

    ``predictions`` maps a variant name to ``(prediction, reference)``, both
    zone fields ``[n, n_t, ny, nx]`` or both boundary traces ``[n, n_t, n_b]``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    eps_rows, ke_rows, map_rows, summary = [], [], [], {}
    eps_series, ke_series = {}, {}
    for name, (pred, ref) in predictions.items():
        pred, ref = np.asarray(pred, dtype=np.float64), np.asarray(ref, dtype=np.float64)
        if pred.ndim == 3:
            pred, ref = as_maps(pred), as_maps(ref)
        eps = metrics.epsilon_aggregate(pred, ref)
        ke = metrics.epsilon_aggregate(metrics.kinetic_energy(pred, dt), metrics.kinetic_energy(ref, dt))
        eps_rows += curve_rows(name, eps)
        ke_rows += curve_rows(name, ke, offset=1)
        err = np.abs(pred - ref).mean(axis=(0, 1))
        map_rows += [(name, j, i, err[j, i]) for j in range(err.shape[0]) for i in range(err.shape[1])]
        if err.shape[0] > 1:
            heatmap_svg(outdir / f"error_map_{name}.svg", err, f"{name}: mean absolute error")
        eps_series[name] = (np.arange(len(eps.values)), eps.values)
        ke_series[name] = (np.arange(1, len(ke.values) + 1), ke.values)
        summary[name] = {
            "epsilon_median": eps.median(),
            "epsilon_mean": eps.mean(),
            "epsilon_ke_median": ke.median(),
            "epsilon_ke_mean": ke.mean(),
            "n_samples": int(len(pred)),
            "boundary_only": bool(pred.shape[-2] == 1),
        }
    write_csv(outdir / "epsilon.csv", ("variant", "t_index", "value", "skipped"), eps_rows)
    write_csv(outdir / "epsilon_ke.csv", ("variant", "t_index", "value", "skipped"), ke_rows)
    write_csv(outdir / "error_maps.csv", ("variant", "j", "i", "value"), map_rows)
    line_svg(outdir / "epsilon.svg", eps_series, "Relative error over time", ylabel="epsilon")
    line_svg(outdir / "epsilon_ke.svg", ke_series, "Relative error on kinetic energy", ylabel="epsilon on K_e")
    write_json(outdir / "summary.json", summary)
    return summary


# -- Monte-Carlo study -----------------------------------------------------------


def per_sample_amplitude(samples) -> np.ndarray:
    """Largest pointwise amplitude of each sample (fields or traces)."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 3:
        s = as_maps(s)
    return metrics.max_amplitude(s).reshape(len(s), -1).max(axis=1)


def mc_report(truth_mc, train, sources: dict, zone: GridSpec, outdir, dt: float, bins: int = 20) -> dict:
    """Monte-Carlo comparison of generated samples with the truth ensemble.

    ``truth_mc`` and ``train`` are zone fields ``[N, n_t, ny, nx]``.
    ``sources`` maps a name to samples that are either zone fields or
    boundary traces ``[n, n_t, n_b]``; traces are compared against the
    boundary of the reference ensembles.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    truth_mc = np.asarray(truth_mc, dtype=np.float64)
    train = np.asarray(train, dtype=np.float64)

    def refs(samples):
        if np.asarray(samples).ndim == 3:
            return as_maps(gather_boundary(truth_mc, zone)), as_maps(gather_boundary(train, zone)), as_maps(samples)
        return truth_mc, train, np.asarray(samples, dtype=np.float64)

    eps_rows, sig_rows, mean_rows, sigma_rows, summary = [], [], [], [], {}
    eps_series, sig_series = {}, {}

    baselines = {"mc_truth": truth_mc}
    if len(truth_mc) > 10:
        baselines["mc_truth_10"] = truth_mc[:10]
    for name, samples in list(baselines.items()) + list(sources.items()):
        mc, tr, s = refs(samples)
        mean_train, std_train = metrics.training_mean(tr), metrics.training_std(tr)
        sigma = metrics.discrepancy(s, mean_train)
        srel = metrics.discrepancy_rel_curve(sigma, std_train)
        sig_rows += curve_rows(name, srel)
        sig_series[name] = (np.arange(len(srel.values)), srel.values)
        smax = sigma.max(axis=0)
        sigma_rows += [(name, j, i, smax[j, i]) for j in range(smax.shape[0]) for i in range(smax.shape[1])]
        entry = {"sigma_max": float(sigma.max()), "sigma_rel_median": srel.median(), "n_samples": int(len(s))}
        if name not in baselines:
            mean_gen, mean_mc = s.mean(axis=0), mc.mean(axis=0)
            eps = metrics.epsilon_curve(mean_gen, mean_mc)
            eps_rows += curve_rows(name, eps)
            eps_series[name] = (np.arange(len(eps.values)), eps.values)
            err = np.abs(mean_gen - mean_mc).mean(axis=0)
            mean_rows += [(name, j, i, err[j, i]) for j in range(err.shape[0]) for i in range(err.shape[1])]
            if err.shape[0] > 1:
                heatmap_svg(outdir / f"mean_error_{name}.svg", err, f"{name}: error of the mean")
            entry.update(epsilon_mean_median=eps.median(), epsilon_mean_mean=eps.mean())
        summary[name] = entry

    amp_sources = {"mc_truth": per_sample_amplitude(truth_mc)}
    amp_sources.update({k: per_sample_amplitude(v) for k, v in sources.items()})
    hist = metrics.amplitude_histogram(amp_sources, bins)
    for k in amp_sources:
        summary.setdefault(k, {})["amplitude_count"] = int(hist.counts[k].sum())

    write_csv(outdir / "epsilon_mean.csv", ("variant", "t_index", "value", "skipped"), eps_rows)
    write_csv(outdir / "sigma_rel.csv", ("source", "t_index", "value", "skipped"), sig_rows)
    write_csv(outdir / "amplitude_hist.csv", ("source", "bin_lo", "bin_hi", "count"), hist.rows())
    write_csv(outdir / "mean_error_maps.csv", ("variant", "j", "i", "value"), mean_rows)
    write_csv(outdir / "sigma_maps.csv", ("source", "j", "i", "value"), sigma_rows)
    line_svg(outdir / "epsilon_mean.svg", eps_series, "Relative error of the ensemble mean", ylabel="epsilon")
    line_svg(outdir / "sigma_rel.svg", sig_series, "Relative discrepancy", ylabel="sigma_rel")
    histogram_svg(outdir / "amplitude_hist.svg", hist.edges, hist.counts, "Maximum amplitude per sample")
    write_json(outdir / "summary.json", summary)
    return summary


# -- trend comparison ------------------------------------------------------------

TRENDS = (
    ("evaluate", "epsilon_ke_median", "NN_BC_ZOOM", "NN"),
    ("uq", "epsilon_mean_median", "WGAN_BC_ZOOM", "WGAN"),
)


def trend_report(reports_dir) -> list[tuple]:
    """Side-by-side comparisons; PASS when the zoomed variant has the lower error.

    Rows whose inputs are not available yet are marked ``n/a``.
    """
    reports_dir = Path(reports_dir)
    rows = []
    for stage, key, zoomed, plain in TRENDS:
        path = reports_dir / stage / "summary.json"
        data = json.loads(path.read_text()) if path.exists() else {}
        a = (data.get(zoomed) or {}).get(key)
        b = (data.get(plain) or {}).get(key)
        if a is None or b is None:
            verdict = "n/a"
        else:
            verdict = "PASS" if a < b else "FAIL"
        rows.append((key, zoomed, a if a is not None else float("nan"), plain, b if b is not None else float("nan"), verdict))
    write_csv(reports_dir / "trend.csv", ("indicator", "zoomed", "zoomed_value", "baseline", "baseline_value", "verdict"), rows)
    return rows
