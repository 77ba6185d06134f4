"""Neural boundary/field generators and their coupling to the FEM submodel.

Estimators follow the scikit-learn conventions: hyperparameters in
``__init__``, learned state in trailing-underscore attributes set by
``fit``. Targets are normalized by one global max-abs over the training
targets so relative amplitudes across samples are preserved.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from . import autodiff as ad
from . import storage
from .autodiff import Layer, NetSpec, Tensor
from .autodiff import tensor as T
from .fem import SubmodelSolver
from .grid import GridSpec, TimeGrid, gather_boundary
from .pod import PodRfRegressor
from .validation import check_array_2d, check_finite, check_is_fitted

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


# -- architectures -------------------------------------------------------------

def _upsampling_plan(size):
    """Start size and (kernel, stride, pad) so three x2 stages cover ``size``."""
    if size <= 1:
        return 1, (1, 1, 0)
    return math.ceil(size / 8), (4, 2, 1)


def generator_spec(in_dim, image_shape, hidden=256, channels=(32, 32, 32)) -> NetSpec:
    """Dense head, then three transposed-conv stages cropped to ``image_shape``.

    ``image_shape`` is ``(C, H, W)``; an axis of size 1 is left un-strided.
    """
    c_out, h, w = image_shape
    (h0, (kh, sh, ph)), (w0, (kw, sw, pw)) = _upsampling_plan(h), _upsampling_plan(w)
    chans = list(channels) + [c_out]
    layers = [
        Layer("dense", in_features=in_dim, out_features=hidden, activation="leaky_relu"),
        Layer("dense", in_features=hidden, out_features=chans[0] * h0 * w0, activation="leaky_relu"),
        Layer("reshape", shape=(chans[0], h0, w0)),
    ]
    for k in range(3):
        layers.append(
            Layer(
                "tconv2d",
                in_channels=chans[k],
                out_channels=chans[k + 1],
                kernel=(kh, kw),
                stride=(sh, sw),
                padding=(ph, pw),
                activation="leaky_relu" if k < 2 else "linear",
            )
        )
    layers.append(Layer("crop", shape=(c_out, h, w)))
    return NetSpec((in_dim,), layers)


def critic_spec(image_shape, channels=(8, 16, 32)) -> NetSpec:
    """Three strided conv stages and a dense layer to one scalar."""
    c, h, w = image_shape
    layers, shape = [], (c, h, w)
    for ch in channels:
        kern, strd, pad = [], [], []
        for n in shape[1:]:
            k, s, p = (4, 2, 1) if n >= 4 else (1, 1, 0)
            kern.append(k)
            strd.append(s)
            pad.append(p)
        layer = Layer("conv2d", in_channels=shape[0], out_channels=ch, kernel=kern, stride=strd, padding=pad, activation="leaky_relu")
        shape = layer.output_shape(shape)
        layers.append(layer)
    flat = int(np.prod(shape))
    layers += [Layer("reshape", shape=(flat,)), Layer("dense", in_features=flat, out_features=1)]
    return NetSpec((c, h, w), layers)


def image_shape(target_shape, time_channels: bool):
    """Map a per-sample target shape onto the ``(C, H, W)`` net output."""
    target_shape = tuple(target_shape)
    if len(target_shape) == 3:
        return target_shape
    if len(target_shape) == 2:
        return (target_shape[0], 1, target_shape[1]) if time_channels else (1,) + target_shape
    if len(target_shape) == 1:
        return (1, 1, target_shape[0])
    raise ValueError(f"unsupported target shape {target_shape}")


def _rmse_objective(out: Tensor, target) -> Tensor:
    """Batch mean of per-sample RMS error."""
    diff = out - Tensor(target)
    axes = tuple(range(1, diff.ndim))
    ms = T.tsum(diff * diff, axis=axes) * (1.0 / int(np.prod(diff.shape[1:])))
    return T.sqrt(ms + 1e-300).mean()


# -- deterministic regressor ---------------------------------------------------

class DcnrRegressor(RegressorMixin, BaseEstimator):
    """Transposed-convolution regressor from parameter vectors to fields.

    Minimizes the mean per-sample RMS error of normalized targets with
    minibatch Adam. ``time_channels`` folds the first target axis (time)
    into output channels.
    """

    def __init__(
        self,
        time_channels=True,
        hidden=256,
        channels=(32, 32, 32),
        epochs=300,
        batch_size=16,
        lr=1e-3,
        lr_final=None,
        beta1=0.9,
        beta2=0.999,
        random_state=0,
    ):
        self.time_channels = time_channels
        self.hidden = hidden
        self.channels = channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_final = lr_final
        self.beta1 = beta1
        self.beta2 = beta2
        self.random_state = random_state

    def _scale_x(self, X):
        return 2.0 * (X - self.x_min_) / self.x_span_ - 1.0

    def _objective(self, Xs, Yn):
        with ad.no_grad():
            out = ad.apply(self.spec_, Tensor(self.theta_), Tensor(Xs))
            return float(_rmse_objective(out, Yn).data)

    def fit(self, X, Y):
        X = check_array_2d(X, "X")
        Y = check_finite(Y, "Y")
        if len(Y) != len(X):
            raise ValueError(f"X has {len(X)} rows but Y has {len(Y)}")
        self.target_shape_ = Y.shape[1:]
        self.image_shape_ = image_shape(self.target_shape_, self.time_channels)
        self.x_min_ = X.min(axis=0)
        self.x_span_ = np.where(X.max(axis=0) > self.x_min_, X.max(axis=0) - self.x_min_, 1.0)
        scale = np.abs(Y).max()
        self.y_scale_ = float(scale) if scale > 0 else 1.0
        Xs = self._scale_x(X)
        Yn = (Y / self.y_scale_).reshape((len(Y),) + self.image_shape_)

        self.spec_ = generator_spec(X.shape[1], self.image_shape_, self.hidden, self.channels)
        rng = np.random.default_rng(self.random_state)
        self.theta_ = ad.init_params(self.spec_, int(rng.integers(2**31 - 1)))
        opt = ad.AdamState(self.spec_.n_params, self.lr, self.beta1, self.beta2)
        self.loss_curve_ = [self._objective(Xs, Yn)]
        n = len(X)
        decay = 1.0
        if self.lr_final is not None and self.epochs > 1:
            decay = (self.lr_final / self.lr) ** (1.0 / (self.epochs - 1))
        for epoch in range(self.epochs):
            opt.lr = self.lr * decay**epoch
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = perm[start:start + self.batch_size]
                th = Tensor(self.theta_, requires_grad=True)
                loss = _rmse_objective(ad.apply(self.spec_, th, Tensor(Xs[idx])), Yn[idx])
                (g,) = ad.grad(loss, [th])
                if not np.isfinite(loss.data) or not np.isfinite(g.data).all():
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                self.theta_ = ad.adam_step(opt, self.theta_, g.data)
            self.loss_curve_.append(self._objective(Xs, Yn))
            if not np.isfinite(self.loss_curve_[-1]):
                raise TrainingError(f"non-finite training loss after epoch {epoch}")
        self.n_features_in_ = X.shape[1]
        return self

    def predict_normalized(self, X):
        check_is_fitted(self, "theta_")
        out = ad.forward(self.spec_, self.theta_, self._scale_x(check_array_2d(X, "X")))
        return out.reshape((len(out),) + tuple(self.target_shape_))

    def predict(self, X):
        return self.predict_normalized(X) * self.y_scale_

    def state(self):
        check_is_fitted(self, "theta_")
        meta = {
            "estimator": "DcnrRegressor",
            "params": _jsonable(self.get_params()),
            "net": self.spec_.to_dict(),
            "target_shape": list(self.target_shape_),
            "y_scale": self.y_scale_,
            "loss_curve": [float(v) for v in self.loss_curve_],
        }
        arrays = {"theta.f64": self.theta_, "x_min.f64": self.x_min_, "x_span.f64": self.x_span_}
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        est = cls(**_unjson_params(meta["params"]))
        est.spec_ = NetSpec.from_dict(meta["net"])
        est.target_shape_ = tuple(meta["target_shape"])
        est.image_shape_ = image_shape(est.target_shape_, est.time_channels)
        est.y_scale_ = meta["y_scale"]
        est.loss_curve_ = meta["loss_curve"]
        est.theta_ = arrays["theta.f64"]
        est.x_min_ = arrays["x_min.f64"]
        est.x_span_ = arrays["x_span.f64"]
        est.n_features_in_ = len(est.x_min_)
        return est


# -- Wasserstein GAN with gradient penalty --------------------------------------

class WassersteinGAN(BaseEstimator):
    """Unconditional WGAN-GP over fields or boundary traces.

    ``fit(Y)`` learns to sample rows like ``Y`` from a standard normal latent
    vector. Each generator iteration follows ``n_critic`` critic updates on
    ``E[D(fake)] - E[D(real)] + lambda_gp * GP``; the generator minimizes
    ``-E[D(G(z))]``. One epoch is ``ceil(n / batch_size)`` generator
    iterations.
    """

    def __init__(
        self,
        time_channels=True,
        latent_dim=32,
        hidden=256,
        channels=(32, 32, 32),
        critic_channels=(8, 16, 32),
        epochs=200,
        batch_size=16,
        lr=1e-4,
        beta1=0.0,
        beta2=0.9,
        lambda_gp=10.0,
        n_critic=5,
        random_state=0,
    ):
        self.time_channels = time_channels
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.channels = channels
        self.critic_channels = critic_channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.lambda_gp = lambda_gp
        self.n_critic = n_critic
        self.random_state = random_state

    def _critic_step(self, real, z, u):
        with ad.no_grad():
            fake = ad.apply(self.gen_spec_, Tensor(self.gen_theta_), Tensor(z)).data
        th = Tensor(self.critic_theta_, requires_grad=True)
        d_real = ad.apply(self.critic_spec_, th, Tensor(real)).mean()
        d_fake = ad.apply(self.critic_spec_, th, Tensor(fake)).mean()
        loss = d_fake - d_real
        gp = Tensor(0.0)
        if self.lambda_gp:
            x_hat = u * real + (1.0 - u) * fake
            gp = ad.gradient_penalty(self.critic_spec_, th, x_hat)
            loss = loss + self.lambda_gp * gp
        (g,) = ad.grad(loss, [th])
        if not np.isfinite(loss.data) or not np.isfinite(g.data).all():
            raise TrainingError("non-finite critic loss")
        self.critic_theta_ = ad.adam_step(self._critic_opt, self.critic_theta_, g.data)
        return float(loss.data), float(gp.data)

    def _generator_step(self, z):
        th = Tensor(self.gen_theta_, requires_grad=True)
        fake = ad.apply(self.gen_spec_, th, Tensor(z))
        loss = -ad.apply(self.critic_spec_, Tensor(self.critic_theta_), fake).mean()
        (g,) = ad.grad(loss, [th])
        if not np.isfinite(loss.data) or not np.isfinite(g.data).all():
            raise TrainingError("non-finite generator loss")
        self.gen_theta_ = ad.adam_step(self._gen_opt, self.gen_theta_, g.data)
        return float(loss.data)

    def wasserstein_estimate(self, real_normalized, z):
        """``E_real[D] - E_fake[D]`` with the current critic."""
        fake = ad.forward(self.gen_spec_, self.gen_theta_, z)
        d = lambda x: ad.forward(self.critic_spec_, self.critic_theta_, x).mean()
        return float(d(real_normalized) - d(fake))

    def fit(self, Y, y=None):
        Y = check_finite(Y, "Y")
        if len(Y) == 0:
            raise ValueError("empty training set")
        self.target_shape_ = Y.shape[1:]
        self.image_shape_ = image_shape(self.target_shape_, self.time_channels)
        scale = np.abs(Y).max()
        self.y_scale_ = float(scale) if scale > 0 else 1.0
        real = (Y / self.y_scale_).reshape((len(Y),) + self.image_shape_)

        rng = np.random.default_rng(self.random_state)
        self.gen_spec_ = generator_spec(self.latent_dim, self.image_shape_, self.hidden, self.channels)
        self.critic_spec_ = critic_spec(self.image_shape_, self.critic_channels)
        self.gen_theta_ = ad.init_params(self.gen_spec_, int(rng.integers(2**31 - 1)))
        self.critic_theta_ = ad.init_params(self.critic_spec_, int(rng.integers(2**31 - 1)))
        self._gen_opt = ad.AdamState(self.gen_spec_.n_params, self.lr, self.beta1, self.beta2)
        self._critic_opt = ad.AdamState(self.critic_spec_.n_params, self.lr, self.beta1, self.beta2)

        n = len(real)
        bs = min(self.batch_size, n)
        z_eval = rng.standard_normal((min(n, 64), self.latent_dim))
        self.history_ = [
            {"epoch": 0, "critic_loss": float("nan"), "gradient_penalty": float("nan"),
             "generator_loss": float("nan"), "wasserstein": self.wasserstein_estimate(real, z_eval)}
        ]
        perm, cursor = rng.permutation(n), 0
        for epoch in range(1, self.epochs + 1):
            c_losses, gps, g_losses = [], [], []
            for _ in range(math.ceil(n / bs)):
                for _ in range(self.n_critic):
                    if cursor + bs > n:
                        perm, cursor = rng.permutation(n), 0
                    batch = real[perm[cursor:cursor + bs]]
                    cursor += bs
                    z = rng.standard_normal((bs, self.latent_dim))
                    u = rng.random((bs,) + (1,) * len(self.image_shape_))
                    cl, gp = self._critic_step(batch, z, u)
                    c_losses.append(cl)
                    gps.append(gp)
                g_losses.append(self._generator_step(rng.standard_normal((bs, self.latent_dim))))
            self.history_.append(
                {
                    "epoch": epoch,
                    "critic_loss": float(np.mean(c_losses)),
                    "gradient_penalty": float(np.mean(gps)),
                    "generator_loss": float(np.mean(g_losses)),
                    "wasserstein": self.wasserstein_estimate(real, z_eval),
                }
            )
        return self

    def latent(self, n, random_state=None):
        return np.random.default_rng(random_state).standard_normal((n, self.latent_dim))

    def generate_normalized(self, Z):
        check_is_fitted(self, "gen_theta_")
        out = ad.forward(self.gen_spec_, self.gen_theta_, check_array_2d(Z, "Z"))
        return out.reshape((len(out),) + tuple(self.target_shape_))

    def generate(self, Z):
        return self.generate_normalized(Z) * self.y_scale_

    def sample(self, n, random_state=None):
        return self.generate(self.latent(n, random_state))

    def state(self):
        check_is_fitted(self, "gen_theta_")
        meta = {
            "estimator": "WassersteinGAN",
            "params": _jsonable(self.get_params()),
            "generator": self.gen_spec_.to_dict(),
            "critic": self.critic_spec_.to_dict(),
            "target_shape": list(self.target_shape_),
            "y_scale": self.y_scale_,
            "history": self.history_,
        }
        return meta, {"generator.f64": self.gen_theta_, "critic.f64": self.critic_theta_}

    @classmethod
    def from_state(cls, meta, arrays):
        est = cls(**_unjson_params(meta["params"]))
        est.gen_spec_ = NetSpec.from_dict(meta["generator"])
        est.critic_spec_ = NetSpec.from_dict(meta["critic"])
        est.target_shape_ = tuple(meta["target_shape"])
        est.image_shape_ = image_shape(est.target_shape_, est.time_channels)
        est.y_scale_ = meta["y_scale"]
        est.history_ = meta["history"]
        est.gen_theta_ = arrays["generator.f64"]
        est.critic_theta_ = arrays["critic.f64"]
        return est


def _jsonable(params):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


def _unjson_params(params):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}


# -- zoom coupling ---------------------------------------------------------------

class ZoomSubmodel(TransformerMixin, BaseEstimator):
    """Turns boundary traces ``[n, n_t, n_b]`` into zone fields ``[n, n_t, n'_y, n'_x]``.

    Stateless apart from the factored submodel operators, so ``fit`` only
    validates the configuration.
    """

    def __init__(self, zone: GridSpec | None = None, time: TimeGrid | None = None, c=2000.0):
        self.zone = zone
        self.time = time
        self.c = c

    def fit(self, X=None, y=None):
        if self.zone is None or self.time is None:
            raise ValueError("zone and time must be set")
        self.solver_ = SubmodelSolver(self.zone, self.time, self.c)
        return self

    def _solver(self):
        if not hasattr(self, "solver_"):
            self.fit()
        return self.solver_

    def transform(self, X):
        X = check_finite(X, "traces")
        single = X.ndim == 2
        X = X[None] if single else X
        out = np.array([self._solver().solve(tr) for tr in X])
        return out[0] if single else out

    def residuals(self, fields) -> np.ndarray:
        """Per-step relative residuals ``[n, n_t]`` of the submodel equations."""
        fields = np.asarray(fields)
        single = fields.ndim == 3
        fields = fields[None] if single else fields
        res = np.array([self._solver().residuals(f) for f in fields])
        return res[0] if single else res


def zoom(outputs, zone: GridSpec, time: TimeGrid, c: float, boundary_output: bool) -> np.ndarray:
    """Run the submodel on generator outputs.

    Boundary outputs ``[n, n_t, n_b]`` are used directly; full-field outputs
    ``[n, n_t, n'_y, n'_x]`` are first restricted to the zone boundary.
    """
    outputs = np.asarray(outputs)
    traces = outputs if boundary_output else gather_boundary(outputs, zone)
    return ZoomSubmodel(zone, time, c).fit().transform(traces)


def save_estimator(est, directory, extra=None) -> str:
    meta, arrays = est.state()
    if extra:
        meta = dict(meta, **extra)
    meta["kind"] = "model"
    return storage.save_container(directory, meta, arrays)


def load_estimator(directory):
    meta, arrays = storage.load_container(directory)
    if meta.get("kind") != "model":
        raise storage.FormatError(f"{directory} is not a model container")
    classes = {"DcnrRegressor": DcnrRegressor, "WassersteinGAN": WassersteinGAN, "PodRfRegressor": PodRfRegressor}
    cls = classes.get(meta.get("estimator"))
    if cls is None:
        raise storage.FormatError(f"{directory}: unknown estimator {meta.get('estimator')!r}")
    return cls.from_state(meta, arrays), meta
