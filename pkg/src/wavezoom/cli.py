"""Command-line entry point: ``wavezoom generate|train|evaluate|uq``.

Exit codes: 0 success, 2 configuration or usage error, 3 missing
prerequisite (dataset or model not found, or built for other physics),
4 numerical failure (solver or training breakdown).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import report, storage
from .config import ConfigError, RunConfig
from .dataset import SPLITS, Dataset, generate_dataset
from .fem import SolverError
from .grid import gather_boundary
from .models import TrainingError, load_estimator, save_estimator
from .variants import (
    GENERATIVE,
    PARAMETRIC,
    Variant,
    VariantError,
    fit_variant,
    parse_variant,
    zone_fields,
)

logger = logging.getLogger("wavezoom")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4


class MissingPrerequisite(RuntimeError):
    pass


# -- run layout ------------------------------------------------------------------


class Run:
    def __init__(self, config: RunConfig, root=None):
        self.config = config
        self.root = Path(root if root is not None else config.output_dir)

    def dataset_dir(self, split):
        return self.root / "datasets" / split

    def model_dir(self, kind):
        return self.root / "models" / kind

    def report_dir(self, stage):
        return self.root / "reports" / stage

    def load_dataset(self, split) -> Dataset:
        d = self.dataset_dir(split)
        if not (d / "manifest.json").exists():
            raise MissingPrerequisite(f"dataset {split!r} not found at {d}; run 'wavezoom generate' first")
        ds = Dataset.load(d)
        if ds.config != self.config.physics_snapshot():
            raise MissingPrerequisite(f"dataset {split!r} at {d} was generated with a different physical setup")
        return ds

    def zone_fields(self, ds: Dataset) -> np.ndarray:
        return zone_fields(ds.fields, ds.domain, ds.zone)

    def load_variant(self, kind) -> Variant:
        cfg = self.config
        if kind == "TRUTH":
            return Variant("TRUTH", None, cfg.zone_spec, cfg.time_grid, float(cfg.c))
        d = self.model_dir(kind)
        if not (d / "manifest.json").exists():
            raise MissingPrerequisite(f"model {kind!r} not found at {d}; run 'wavezoom train --variant {kind}' first")
        est, meta = load_estimator(d)
        if meta.get("physics") != cfg.physics_snapshot():
            raise MissingPrerequisite(f"model {kind!r} at {d} was trained for a different physical setup")
        return Variant(kind, est, cfg.zone_spec, cfg.time_grid, float(cfg.c))


# -- commands --------------------------------------------------------------------


def cmd_generate(run: Run, jobs=1, seed=None):
    cfg = run.config
    for k, split in enumerate(SPLITS):
        s = cfg.seeds[split] if seed is None else seed + k
        ds = generate_dataset(split, cfg, seed=s, jobs=jobs)
        h = ds.save(run.dataset_dir(split))
        logger.info("%s: %d samples (%d rejected) -> %s [%s]", split, len(ds), len(ds.rejected), run.dataset_dir(split), h[:12])


def _loss_rows(est):
    if hasattr(est, "loss_curve_"):
        return ("epoch", "loss"), [(k, v) for k, v in enumerate(est.loss_curve_)]
    if hasattr(est, "history_"):
        keys = ("epoch", "critic_loss", "gradient_penalty", "generator_loss", "wasserstein")
        return keys, [tuple(h[k] for k in keys) for h in est.history_]
    return None, None


def cmd_train(run: Run, kinds, seed=None, jobs=1):
    cfg = run.config
    train = run.load_dataset("train")
    zf = run.zone_fields(train)
    for kind in kinds:
        s = cfg.seeds["models"] if seed is None else seed
        logger.info("training %s on %d samples", kind, len(train))
        est = fit_variant(kind, train.params, zf, cfg, s, jobs)
        d = run.model_dir(kind)
        save_estimator(est, d, {"variant": kind, "physics": cfg.physics_snapshot(), "seed": int(s)})
        header, rows = _loss_rows(est)
        if header:
            report.write_csv(d / "loss.csv", header, rows)
        if kind == "POD_RF":
            lam = est.pod_.eigenvalues_
            report.write_csv(d / "spectrum.csv", ("mode", "eigenvalue"), list(enumerate(lam)))


def _default_eval_variants(run: Run):
    names = ["TRUTH"]
    for kind in PARAMETRIC:
        if (run.model_dir(kind) / "manifest.json").exists():
            names += [kind, kind + "_ZOOM"]
    return names


def cmd_evaluate(run: Run, names, seed=None):
    cfg = run.config
    test = run.load_dataset("test")
    truth = run.zone_fields(test)
    zone, n_z = cfg.zone_spec, cfg.uq["n_z"]
    preds = {}
    for name in names:
        base, zoom = parse_variant(name)
        label = base + ("_ZOOM" if zoom else "")
        v = run.load_variant(base)
        if base == "TRUTH":
            native = truth
        elif base in GENERATIVE:
            native = v.native_from_latent(v.estimator.latent(n_z, cfg.seeds["uq"] if seed is None else seed))
        else:
            native = v.predict(test.params)
        out = v.to_zone(native, zoom)
        ref = gather_boundary(truth, zone) if out.ndim == 3 else truth
        if base in GENERATIVE:
            # no parameter pairing: compare the ensemble mean with the test-set mean
            out, ref = out.mean(axis=0, keepdims=True), ref.mean(axis=0, keepdims=True)
        preds[label] = (out, ref)
    report.evaluate_report(preds, run.report_dir("evaluate"), cfg.time_grid.dt)
    report.trend_report(run.root / "reports")


def cmd_uq(run: Run, names=None, seed=None):
    cfg = run.config
    mc = run.load_dataset("mc")
    train = run.load_dataset("train")
    mc_z, train_z = run.zone_fields(mc), run.zone_fields(train)
    kinds = names or list(GENERATIVE)
    n_z = cfg.uq["n_z"]
    z_seed = cfg.seeds["uq"] if seed is None else seed
    sources = {}
    for name in kinds:
        base, zoom = parse_variant(name)
        if base not in GENERATIVE + ("TRUTH",):
            raise VariantError(f"uq needs a generative variant or TRUTH, got {name!r}")
        v = run.load_variant(base)
        if base == "TRUTH":
            sources["TRUTH"] = mc_z
            continue
        native = v.native_from_latent(v.estimator.latent(n_z, z_seed))
        # without an explicit list, each generator is reported bare and zoomed
        if not names or not zoom:
            sources[base] = native
        if not names or zoom:
            sources[base + "_ZOOM"] = v.to_zone(native, True)
    report.mc_report(mc_z, train_z, sources, cfg.zone_spec, run.report_dir("uq"), cfg.time_grid.dt, int(cfg.uq["bins"]))
    report.trend_report(run.root / "reports")


# -- argument handling -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavezoom", description="Surrogate wave models with FEM zoom coupling.")
    p.add_argument("command", choices=("generate", "train", "evaluate", "uq"))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--variant", action="append", help="variant name (repeatable); default depends on the command")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sample-level work")
    p.add_argument("--seed", type=int, default=None, help="override the command's seed")
    p.add_argument("--output-dir", default=None, help="override output_dir from the config")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _train_kinds(variants):
    if not variants:
        return list(PARAMETRIC) + list(GENERATIVE)
    kinds = []
    for name in variants:
        base, _ = parse_variant(name)
        if base == "TRUTH":
            raise VariantError("TRUTH replays reference data and has nothing to train")
        if base not in kinds:
            kinds.append(base)
    return kinds


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError([f"--jobs must be >= 1, got {args.jobs}"])
        path = Path(args.config)
        if not path.exists():
            raise ConfigError([f"config file {path} not found"])
        cfg = RunConfig.load(path).validate()
        run = Run(cfg, args.output_dir)
        if args.variant:
            for name in args.variant:
                parse_variant(name)
        if args.command == "generate":
            cmd_generate(run, args.jobs, args.seed)
        elif args.command == "train":
            cmd_train(run, _train_kinds(args.variant), args.seed, args.jobs)
        elif args.command == "evaluate":
            cmd_evaluate(run, args.variant or _default_eval_variants(run), args.seed)
        else:
            cmd_uq(run, args.variant, args.seed)
    except (ConfigError, VariantError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        for msg in problems:
            print(f"wavezoom: error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingPrerequisite, FileNotFoundError, storage.FormatError) as exc:
        print(f"wavezoom: missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingError, SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"wavezoom: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
