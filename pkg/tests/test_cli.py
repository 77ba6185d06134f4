import json
import time

import numpy as np
import pytest

from wavezoom import report, storage
from wavezoom.cli import main

from conftest import smoke_config


def write_cfg(tmp_path, **over):
    cfg = smoke_config(tmp_path / "run", **over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    return str(p)


def test_generate_smoke_counts_and_speed(tmp_path):
    cfg = write_cfg(tmp_path, sizes={"train": 2, "test": 1, "mc": 2})
    t0 = time.perf_counter()
    assert main(["generate", "--config", cfg]) == 0
    assert time.perf_counter() - t0 < 5
    for split, n in (("train", 2), ("test", 1), ("mc", 2)):
        assert storage.load_manifest(tmp_path / "run" / "datasets" / split)["n_samples"] == n


def test_invalid_bounds_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, bounds={"omega": [5000, 4000], "x_s": [-2.2, -1.5], "y_s": [-1.8, 0.5]})
    assert main(["generate", "--config", cfg]) == 2
    assert "bounds.omega" in capsys.readouterr().err


def test_missing_config_and_bad_jobs(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "none.json")]) == 2
    assert main(["generate", "--config", write_cfg(tmp_path), "--jobs", "0"]) == 2


def test_unknown_variant_lists_kinds(tmp_path, capsys):
    assert main(["train", "--config", write_cfg(tmp_path), "--variant", "GPT"]) == 2
    err = capsys.readouterr().err
    assert "NN_BC" in err and "POD_RF" in err and "WGAN_BC" in err


def test_missing_prerequisites_exit_3(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["train", "--config", cfg, "--variant", "NN"]) == 3
    assert main(["evaluate", "--config", cfg]) == 3
    main(["generate", "--config", cfg])
    assert main(["evaluate", "--config", cfg, "--variant", "NN_BC_ZOOM"]) == 3
    assert main(["uq", "--config", cfg]) == 3


def test_stale_dataset_rejected(tmp_path):
    cfg = write_cfg(tmp_path)
    main(["generate", "--config", cfg])
    cfg2 = write_cfg(tmp_path, c=1500.0)
    assert main(["train", "--config", cfg2, "--variant", "NN"]) == 3


def test_numerical_failure_exit_4(tmp_path):
    cfg = write_cfg(tmp_path, dcnr={"epochs": 2, "lr": 1e300, "beta1": 0.0})
    main(["generate", "--config", cfg])
    with np.errstate(all="ignore"):
        assert main(["train", "--config", cfg, "--variant", "NN_BC"]) == 4


def test_train_outputs(tmp_path):
    cfg = write_cfg(tmp_path)
    main(["generate", "--config", cfg])
    assert main(["train", "--config", cfg, "--variant", "POD_RF", "--variant", "NN_BC"]) == 0
    pod = storage.load_manifest(tmp_path / "run" / "models" / "POD_RF")
    assert "modes.f64" in pod["arrays"] and any(k.startswith("forest/") for k in pod["arrays"])
    loss = report.read_csv(tmp_path / "run" / "models" / "NN_BC" / "loss.csv")
    assert len(loss) == 3 and all(np.isfinite(float(r["loss"])) for r in loss)


def test_evaluate_identity_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path)
    main(["generate", "--config", cfg])
    main(["train", "--config", cfg, "--variant", "NN", "--variant", "NN_BC"])
    args = ["evaluate", "--config", cfg, "--variant", "TRUTH", "--variant", "NN", "--variant", "NN_BC_ZOOM"]
    assert main(args) == 0
    out = tmp_path / "run" / "reports" / "evaluate"
    rows = report.read_csv(out / "epsilon.csv")
    assert {r["variant"] for r in rows} == {"TRUTH", "NN", "NN_BC_ZOOM"}
    assert all(r["value"] in ("0", "nan") for r in rows if r["variant"] == "TRUTH")
    first = (out / "epsilon.csv").read_bytes()
    assert main(args) == 0
    assert (out / "epsilon.csv").read_bytes() == first


def test_uq_histogram_sources(tmp_path):
    cfg = write_cfg(tmp_path)
    main(["generate", "--config", cfg])
    main(["train", "--config", cfg, "--variant", "WGAN", "--variant", "WGAN_BC"])
    assert main(["uq", "--config", cfg]) == 0
    hist = report.read_csv(tmp_path / "run" / "reports" / "uq" / "amplitude_hist.csv")
    assert {r["source"] for r in hist} == {"mc_truth", "WGAN", "WGAN_ZOOM", "WGAN_BC", "WGAN_BC_ZOOM"}
    trend = report.read_csv(tmp_path / "run" / "reports" / "trend.csv")
    assert trend[1]["verdict"] in ("PASS", "FAIL")
