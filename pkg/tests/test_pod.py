import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from wavezoom.pod import (
    PodRfRegressor,
    PodTransformer,
    RegressionForest,
    Tree,
    correlation_matrix,
    pod_modes,
    project,
    reconstruct,
)


def loop_correlation(U):
    m = len(U)
    C = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            C[i, j] = sum(U[i, k] * U[j, k] for k in range(U.shape[1]))
    return C


def test_correlation_examples(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((10, 4)))
    assert np.allclose(correlation_matrix(Q.T), np.eye(4), atol=1e-14)
    u = np.array([1.0, 1.0, 1.0])
    assert np.allclose(correlation_matrix(np.stack([u, 2 * u])), [[3, 6], [6, 12]])
    U = rng.standard_normal((5, 40))
    C = correlation_matrix(U)
    assert np.abs(C - loop_correlation(U)).max() <= 1e-12
    assert np.abs(C - C.T).max() <= 1e-14


def test_weighted_correlation(rng):
    U = rng.standard_normal((4, 6))
    w = rng.random(6) + 0.5
    assert np.allclose(correlation_matrix(U, w), U @ np.diag(w) @ U.T, atol=1e-13)


def test_single_snapshot():
    u = np.array([[3.0, 4.0, 0.0]])
    b = pod_modes(correlation_matrix(u), u, 1e-12)
    assert b.rank == 1
    assert np.allclose(b.modes[0] * np.sign(b.modes[0, 0]), u[0] / 5)
    assert b.eigenvalues[0] == pytest.approx(25.0)


def test_known_subspace_rank(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((50, 3)))
    U = rng.standard_normal((10, 3)) @ Q.T
    b = pod_modes(correlation_matrix(U), U, 1e-12)
    assert b.rank == 3


def test_all_zero_snapshots_warn(caplog):
    U = np.zeros((4, 5))
    b = pod_modes(correlation_matrix(U), U)
    assert b.rank == 0 and "zero" in caplog.text


@pytest.mark.parametrize("method", ["snapshot", "svd"])
def test_full_rank_reconstruction_and_orthonormality(rng, method):
    U = rng.standard_normal((12, 30)) * np.logspace(0, -3, 12)[:, None]
    pod = PodTransformer(energy_tol=0.0, method=method).fit(U)
    Phi = pod.components_
    assert np.abs(Phi @ Phi.T - np.eye(len(Phi))).max() <= 1e-10
    R = pod.inverse_transform(pod.transform(U))
    rel = np.linalg.norm(R - U, axis=1) / np.linalg.norm(U, axis=1)
    assert rel.max() <= 1e-8
    lam = pod.eigenvalues_
    assert (np.diff(lam) <= 0).all() and lam.min() >= 0


def test_methods_agree(rng):
    U = rng.standard_normal((8, 20))
    a = PodTransformer(0.0, method="snapshot").fit(U)
    b = PodTransformer(0.0, method="svd").fit(U)
    assert np.allclose(a.eigenvalues_, b.eigenvalues_, rtol=1e-10)
    assert np.allclose(np.abs(a.components_ @ b.components_.T), np.eye(8), atol=1e-8)


def test_projection_properties(rng):
    U = rng.standard_normal((6, 20))
    b = PodTransformer(0.0).fit(U).basis_
    e1 = project(b.modes[0], b)
    assert np.allclose(e1, np.eye(b.rank)[0], atol=1e-12)
    alpha = rng.standard_normal(b.rank)
    assert np.allclose(project(reconstruct(alpha, b), b), alpha, atol=1e-12)
    # component orthogonal to the span projects to zero
    v = rng.standard_normal(20)
    v -= reconstruct(project(v, b), b)
    assert np.abs(project(v, b)).max() < 1e-12


def test_truncation_error_monotone(rng):
    U = rng.standard_normal((10, 25))
    errs = []
    for tol in (0.5, 0.2, 0.05, 0.0):
        pod = PodTransformer(tol).fit(U)
        errs.append(np.sum((pod.inverse_transform(pod.transform(U)) - U) ** 2))
    assert all(a >= b - 1e-10 for a, b in zip(errs, errs[1:]))


def test_forest_constant_and_memorization(rng):
    X = rng.random((30, 4))
    f = RegressionForest(n_trees=10, random_state=0).fit(X, np.full(30, 7.0))
    assert np.allclose(f.predict(rng.random((5, 4))), 7.0)
    y = rng.standard_normal(30)
    single = RegressionForest(n_trees=1, min_leaf=1, bootstrap=False).fit(X, y)
    assert np.array_equal(single.predict(X), y)


def test_forest_step_function(rng):
    X = np.column_stack([rng.uniform(4750, 5250, 100), rng.random((100, 3))])
    y = np.where(X[:, 0] < 5000, 1.0, 3.0)
    f = RegressionForest(random_state=1).fit(X, y)
    lo = f.predict(np.array([[4800, 0.5, 0.5, 0.5]]))[0]
    hi = f.predict(np.array([[5200, 0.5, 0.5, 0.5]]))[0]
    assert abs(lo - 1) <= 0.05 and abs(hi - 3) <= 0.15


def test_forest_leaf_size_and_errors(rng):
    X, y = rng.random((40, 2)), rng.random(40)
    f = RegressionForest(n_trees=3, min_leaf=4, random_state=0).fit(X, y)
    with pytest.raises(ValueError):
        RegressionForest().fit(X[:1], y[:1])
    with pytest.raises(NotFittedError):
        RegressionForest().predict(X)
    assert np.isfinite(f.predict(X)).all()


def test_tree_array_roundtrip(rng):
    X, y = rng.random((20, 3)), rng.random(20)
    t = RegressionForest(n_trees=1, random_state=0).fit(X, y).forests_[0][0]
    t2 = Tree.from_array(t.to_array())
    assert np.array_equal(t.predict(X), t2.predict(X))


def test_pod_rf_memorizes_training_field(rng):
    fields = rng.standard_normal((12, 5, 4))
    X = np.column_stack([rng.random((12, 3)), np.linspace(0, 1, 12)])
    m = PodRfRegressor(energy_tol=0.0, n_trees=1, min_leaf=1, bootstrap=False).fit(X, fields.reshape(12, -1))
    pred = m.predict(X)
    rel = np.linalg.norm(pred - fields.reshape(12, -1), axis=1) / np.linalg.norm(fields.reshape(12, -1), axis=1)
    assert rel.max() <= 1e-6
    assert np.array_equal(m.pod_.inverse_transform(np.zeros((1, m.pod_.n_components_))), np.zeros((1, 20)))


def test_pod_rf_state_roundtrip(rng):
    X, Y = rng.random((15, 4)), rng.standard_normal((15, 9))
    m = PodRfRegressor(n_trees=4, random_state=3).fit(X, Y)
    meta, arrays = m.state()
    m2 = PodRfRegressor.from_state(meta, arrays)
    assert np.array_equal(m.predict(X), m2.predict(X))


@pytest.mark.parametrize("method", ["snapshot", "svd"])
def test_zero_energy_tol_keeps_every_retained_mode(method):
    # eigenvalues 1, 1e-2, ..., 1e-10, then 1e-14 and 1e-16 below the default cutoff
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((40, 8)))
    U = (Q * np.array([1, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-7, 1e-8])).T
    full = PodTransformer(energy_tol=0.0, method="svd", eig_cutoff=1e-30).fit(U)
    assert full.n_components_ == 8
    default = PodTransformer(energy_tol=0.0, method=method).fit(U)
    assert default.n_components_ == 6
    rel = np.linalg.norm(full.inverse_transform(full.transform(U)) - U, axis=1) / np.linalg.norm(U, axis=1)
    assert rel.max() <= 1e-8
