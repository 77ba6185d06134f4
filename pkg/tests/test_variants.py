import numpy as np
import pytest

from wavezoom.config import RunConfig
from wavezoom.grid import GridSpec, TimeGrid, gather_boundary
from wavezoom.models import DcnrRegressor, WassersteinGAN
from wavezoom.pod import PodRfRegressor
from wavezoom.variants import (
    BASE_KINDS,
    Variant,
    VariantError,
    fit_variant,
    make_estimator,
    parse_variant,
    training_data,
    valid_names,
)

ZONE = GridSpec(0, 1, 0, 1, 5, 4)
TIME = TimeGrid(6, 1e-3)


@pytest.mark.parametrize(
    "name,expect",
    [("NN", ("NN", False)), ("NN_BC_ZOOM", ("NN_BC", True)), ("NN_BC+ZOOM", ("NN_BC", True)),
     ("WGAN_BC_t", None), ("TRUTH", ("TRUTH", False)), ("POD_RF_ZOOM", ("POD_RF", True))],
)
def test_parse(name, expect):
    if expect is None:
        with pytest.raises(VariantError, match="valid"):
            parse_variant(name)
    else:
        assert parse_variant(name) == expect


def test_valid_names_cover_kinds():
    names = valid_names()
    assert all(k in names and k + "_ZOOM" in names for k in BASE_KINDS)


def test_training_data_shapes(rng):
    params = rng.random((3, 3))
    zf = rng.random((3, 6, 4, 5))
    X, Y = training_data("NN", params, zf, TIME, ZONE)
    assert X.shape == (3, 3) and Y.shape == (3, 6, 4, 5)
    X, Y = training_data("NN_BC", params, zf, TIME, ZONE)
    assert Y.shape == (3, 6, 14)
    X, Y = training_data("NN_BC_t", params, zf, TIME, ZONE)
    assert X.shape == (18, 4) and Y.shape == (18, 14)
    assert np.array_equal(X[:6, 3], TIME.times)
    X, Y = training_data("POD_RF", params, zf, TIME, ZONE)
    assert Y.shape == (18, 20)


def test_make_estimator_kinds():
    cfg = RunConfig()
    assert isinstance(make_estimator("NN", cfg, 0), DcnrRegressor)
    assert make_estimator("NN_t", cfg, 0).epochs == cfg.dcnr["epochs_t"]
    assert make_estimator("NN_BC", cfg, 0).epochs == cfg.dcnr["epochs"]
    assert isinstance(make_estimator("WGAN_BC", cfg, 0), WassersteinGAN)
    assert isinstance(make_estimator("POD_RF", cfg, 0), PodRfRegressor)
    with pytest.raises(VariantError):
        make_estimator("TRUTH", cfg, 0)


def test_variant_outputs(rng):
    cfg = RunConfig.from_dict({"dcnr": {"epochs": 1, "epochs_t": 1, "hidden": 16, "channels": [4, 4, 4]},
                               "pod": {"n_trees": 2}})
    zone, time = ZONE, TIME
    params, zf = rng.random((4, 3)), rng.random((4, 6, 4, 5))
    for kind, shape in [("NN", (2, 6, 4, 5)), ("NN_BC", (2, 6, 14)), ("NN_t", (2, 6, 4, 5)),
                        ("NN_BC_t", (2, 6, 14)), ("POD_RF", (2, 6, 4, 5))]:
        X, Y = training_data(kind, params, zf, time, zone)
        est = make_estimator(kind, cfg, 0).fit(X, Y)
        v = Variant(kind, est, zone, time, 1.0)
        assert v.predict(params[:2]).shape == shape
        zoomed = v.predict(params[:2], zoom=True)
        assert zoomed.shape == (2, 6, 4, 5)
        assert np.allclose(gather_boundary(zoomed, zone), gather_boundary(v.predict(params[:2]), zone)
                           if len(shape) == 4 else v.predict(params[:2]))
