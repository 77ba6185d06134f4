"""Snapshot POD and a bagged regression-tree metamodel for its coordinates."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.tree import DecisionTreeRegressor

from .validation import check_array_2d, check_is_fitted

logger = logging.getLogger(__name__)

EIG_CUTOFF = 1e-12


def correlation_matrix(snapshots, weights=None) -> np.ndarray:
    """Temporal correlation ``C_ij = (U_i, U_j)`` of snapshot rows.

    ``weights`` is an optional per-dof vector defining a diagonal inner
    product; ``None`` is the Euclidean product.
    """
    U = check_array_2d(snapshots, "snapshots")
    UW = U if weights is None else U * np.asarray(weights)
    C = UW @ U.T
    return 0.5 * (C + C.T)


@dataclass
class PodBasis:
    modes: np.ndarray  # [m_hat, n_dof]
    eigenvalues: np.ndarray  # all retained-candidate eigenvalues, descending
    weights: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return len(self.modes)


def _truncation_rank(lam, energy_tol):
    if len(lam) == 0:
        return 0
    if energy_tol <= 0:
        return len(lam)
    cum = np.cumsum(lam)
    return int(np.searchsorted(cum, (1.0 - energy_tol) * cum[-1] * (1 - 1e-15)) + 1)


def _orthonormalize(modes, weights):
    """Symmetric re-orthonormalization; removes round-off from small-eigenvalue modes."""
    if len(modes) == 0:
        return modes
    W = modes if weights is None else modes * weights
    G = W @ modes.T
    vals, vecs = np.linalg.eigh(0.5 * (G + G.T))
    return (vecs / np.sqrt(vals)) @ vecs.T @ modes


def pod_modes(C, snapshots, energy_tol=1e-6, weights=None, eig_cutoff=EIG_CUTOFF) -> PodBasis:
    """Modes ``Phi_j = lambda_j^{-1/2} sum_i A_ij U_i`` from the eigenpairs of ``C``.

    Eigenvalues at or below ``eig_cutoff * lambda_1`` are dropped; the rank is the
    smallest ``k`` capturing a ``1 - energy_tol`` share of the eigenvalue sum.
    """
    U = check_array_2d(snapshots, "snapshots")
    lam, A = np.linalg.eigh(np.asarray(C, dtype=np.float64))
    order = np.argsort(lam)[::-1]
    lam, A = lam[order], A[:, order]
    if len(lam) == 0 or lam[0] <= 0:
        logger.warning("all snapshots are zero; returning an empty basis")
        return PodBasis(np.zeros((0, U.shape[1])), np.zeros(0), weights)
    keep = lam > eig_cutoff * lam[0]
    lam, A = lam[keep], A[:, keep]
    r = _truncation_rank(lam, energy_tol)
    modes = (A[:, :r].T @ U) / np.sqrt(lam[:r])[:, None]
    return PodBasis(_orthonormalize(modes, weights), lam, weights)


def _pod_svd(snapshots, energy_tol, weights, eig_cutoff=EIG_CUTOFF):
    # same eigenpairs as pod_modes, via the dof-side problem; used when m > n_dof
    U = check_array_2d(snapshots, "snapshots")
    sw = None if weights is None else np.sqrt(weights)
    _, s, vt = np.linalg.svd(U if sw is None else U * sw, full_matrices=False)
    lam = s**2
    if len(lam) == 0 or lam[0] <= 0:
        logger.warning("all snapshots are zero; returning an empty basis")
        return PodBasis(np.zeros((0, U.shape[1])), np.zeros(0), weights)
    lam = lam[lam > eig_cutoff * lam[0]]
    r = _truncation_rank(lam, energy_tol)
    modes = vt[:r] if sw is None else vt[:r] / sw
    return PodBasis(modes, lam, weights)


def project(field, basis: PodBasis) -> np.ndarray:
    X = np.asarray(field, dtype=np.float64)
    flat = X.reshape(-1, basis.modes.shape[1])
    XW = flat if basis.weights is None else flat * basis.weights
    coords = XW @ basis.modes.T
    return coords.reshape(X.shape[:-1] + (basis.rank,)) if X.ndim > 1 else coords[0]


def reconstruct(coords, basis: PodBasis) -> np.ndarray:
    return np.asarray(coords, dtype=np.float64) @ basis.modes


class PodTransformer(TransformerMixin, BaseEstimator):
    """Snapshot POD as a transformer: rows of ``X`` are snapshots.

    ``method="snapshot"`` solves the ``m x m`` correlation eigenproblem,
    ``"svd"`` the equivalent dof-side problem, ``"auto"`` picks the smaller.
    ``eig_cutoff`` is the relative eigenvalue floor below which directions
    count as numerically absent.
    """

    def __init__(self, energy_tol=1e-6, weights=None, method="auto", eig_cutoff=EIG_CUTOFF):
        self.eig_cutoff = eig_cutoff
        self.energy_tol = energy_tol
        self.weights = weights
        self.method = method

    def fit(self, X, y=None):
        X = check_array_2d(X, "X")
        w = None if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        method = self.method
        if method == "auto":
            method = "snapshot" if X.shape[0] <= X.shape[1] else "svd"
        if method == "snapshot":
            self.basis_ = pod_modes(correlation_matrix(X, w), X, self.energy_tol, w, self.eig_cutoff)
        elif method == "svd":
            self.basis_ = _pod_svd(X, self.energy_tol, w, self.eig_cutoff)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.components_ = self.basis_.modes
        self.eigenvalues_ = self.basis_.eigenvalues
        self.n_components_ = self.basis_.rank
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return project(check_array_2d(X, "X"), self.basis_)

    def inverse_transform(self, X):
        check_is_fitted(self, "basis_")
        return reconstruct(X, self.basis_)


@dataclass
class Tree:
    """Flat binary regression tree; ``feature < 0`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_array(self):
        return np.column_stack([self.feature, self.threshold, self.left, self.right, self.value])

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a)
        return cls(a[:, 0].astype(np.int64), a[:, 1], a[:, 2].astype(np.int64), a[:, 3].astype(np.int64), a[:, 4])


def _fit_tree(X, y, min_leaf, max_depth, seed) -> Tree:
    reg = DecisionTreeRegressor(min_samples_leaf=min_leaf, max_depth=max_depth, random_state=seed)
    reg.fit(X, y)
    t = reg.tree_
    return Tree(
        np.where(t.children_left < 0, -1, t.feature).astype(np.int64),
        t.threshold.astype(np.float64),
        t.children_left.astype(np.int64),
        t.children_right.astype(np.int64),
        t.value[:, 0, 0].astype(np.float64),
    )


class RegressionForest(RegressorMixin, BaseEstimator):
    """Bootstrap-aggregated CART regression, one forest per output column.

    Every input dimension is a split candidate at every node.
    """

    def __init__(
        self, n_trees=100, min_leaf=2, bootstrap_ratio=1.0, max_depth=None, bootstrap=True, random_state=0, n_jobs=1
    ):
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.bootstrap_ratio = bootstrap_ratio
        self.max_depth = max_depth
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X = check_array_2d(X, "X")
        y = np.asarray(y, dtype=np.float64)
        if len(X) < 2:
            raise ValueError(f"need at least 2 training rows, got {len(X)}")
        self.single_output_ = y.ndim == 1
        Y = y.reshape(len(X), -1)
        rng = np.random.default_rng(self.random_state)
        n = len(X)
        n_boot = max(1, int(round(self.bootstrap_ratio * n)))
        self.bootstrap_seeds_ = rng.integers(0, 2**31 - 1, size=(Y.shape[1], self.n_trees))

        def one(k, seed):
            rows = np.random.default_rng(seed).integers(0, n, n_boot) if self.bootstrap else np.arange(n)
            return _fit_tree(X[rows], Y[rows, k], self.min_leaf, self.max_depth, int(seed))

        # every tree owns its seed, so the result does not depend on n_jobs
        jobs = [(k, s) for k in range(Y.shape[1]) for s in self.bootstrap_seeds_[k]]
        flat = Parallel(n_jobs=self.n_jobs)(delayed(one)(k, s) for k, s in jobs)
        self.forests_ = [flat[k * self.n_trees:(k + 1) * self.n_trees] for k in range(Y.shape[1])]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "forests_")
        X = check_array_2d(X, "X")
        out = np.column_stack([np.mean([t.predict(X) for t in trees], axis=0) for trees in self.forests_])
        return out[:, 0] if self.single_output_ else out


class PodRfRegressor(RegressorMixin, BaseEstimator):
    """POD basis over field snapshots plus a forest predicting its coordinates.

    ``X`` rows are ``(omega, x_s, y_s, t)`` queries and ``Y`` rows the
    flattened fields at those queries.
    """

    def __init__(
        self,
        energy_tol=1e-6,
        n_trees=100,
        min_leaf=2,
        bootstrap_ratio=1.0,
        bootstrap=True,
        weights=None,
        random_state=0,
        n_jobs=1,
    ):
        self.bootstrap = bootstrap
        self.n_jobs = n_jobs
        self.energy_tol = energy_tol
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.bootstrap_ratio = bootstrap_ratio
        self.weights = weights
        self.random_state = random_state

    def fit(self, X, Y):
        X = check_array_2d(X, "X")
        Y = check_array_2d(Y, "Y")
        self.pod_ = PodTransformer(self.energy_tol, self.weights).fit(Y)
        coords = self.pod_.transform(Y)
        self.forest_ = RegressionForest(
            self.n_trees,
            self.min_leaf,
            self.bootstrap_ratio,
            bootstrap=self.bootstrap,
            random_state=self.random_state,
            n_jobs=self.n_jobs,
        ).fit(X, coords)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_coords(self, X):
        check_is_fitted(self, "forest_")
        return self.forest_.predict(check_array_2d(X, "X")).reshape(len(X), -1)

    def predict(self, X):
        return self.pod_.inverse_transform(self.predict_coords(X))

    def state(self):
        check_is_fitted(self, "forest_")
        basis = self.pod_.basis_
        meta = {
            "estimator": "PodRfRegressor",
            "params": {k: v for k, v in self.get_params().items() if k not in ("weights", "n_jobs")},
            "n_features_in": int(self.n_features_in_),
            "tree_sizes": [[len(t.value) for t in trees] for trees in self.forest_.forests_],
            "single_output": bool(self.forest_.single_output_),
        }
        arrays = {"modes.f64": basis.modes, "eigenvalues.f64": basis.eigenvalues}
        if basis.weights is not None:
            arrays["weights.f64"] = basis.weights
        for k, trees in enumerate(self.forest_.forests_):
            arrays[f"forest/{k}.f64"] = np.vstack([t.to_array() for t in trees])
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        weights = arrays.get("weights.f64")
        est = cls(**meta["params"], weights=weights)
        pod = PodTransformer(est.energy_tol, weights)
        pod.basis_ = PodBasis(arrays["modes.f64"], arrays["eigenvalues.f64"], weights)
        pod.components_, pod.eigenvalues_, pod.n_components_ = pod.basis_.modes, pod.basis_.eigenvalues, pod.basis_.rank
        forest = RegressionForest(
            est.n_trees, est.min_leaf, est.bootstrap_ratio, bootstrap=est.bootstrap, random_state=est.random_state
        )
        forest.forests_ = []
        for k, sizes in enumerate(meta["tree_sizes"]):
            stacked = arrays[f"forest/{k}.f64"]
            bounds = np.cumsum([0] + sizes)
            forest.forests_.append([Tree.from_array(stacked[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
        forest.single_output_ = meta["single_output"]
        forest.n_features_in_ = meta["n_features_in"]
        est.pod_, est.forest_, est.n_features_in_ = pod, forest, meta["n_features_in"]
        return est
