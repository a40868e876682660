"""RGB -> target regressors: closed-form affine maps and small ReLU networks.

Two modes share the same machinery:

``direct``
    the network output is the spectrum itself; nothing ties it to the input RGB.
``plausible``
    the network predicts recentred null-space coefficients and the spectrum
    is assembled by :func:`~spectral_plausible.plausible.reconstruct`, so it
    always integrates back to the input RGB.

Parameters are stored as one flat float64 vector, layer by layer, each layer
as its ``(fan_in, fan_out)`` weight matrix in row-major order followed by its
bias. A trained model also carries two fixed positive scalars: inputs are
divided by ``input_scale`` before the first layer and outputs multiplied by
``output_scale`` after the last. Both are constants, so they do not change how
the model responds to a change of exposure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .augmentation import ExposureSampler
from .exceptions import ConfigurationError, DimensionError, FitError, TrainingError
from .plausible import (
    AUGMENTED_RECENTERING,
    UNAUGMENTED_RECENTERING,
    NullSpaceModel,
    Recentering,
    extract_alpha,
    reconstruct,
)

logger = logging.getLogger(__name__)

MODES = ("direct", "plausible")
KINDS = ("linear", "mlp")
ACTIVATIONS = ("relu", "identity")
LOSSES = ("mae", "mse")
OPTIMIZERS = ("adam", "sgd")

_ADAM_B1, _ADAM_B2, _ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class RegressorSpec:
    mode: str = "plausible"
    kind: str = "mlp"
    hidden_layers: tuple = (64, 64)
    output_activation: str = "relu"
    recentering: Recentering | None = UNAUGMENTED_RECENTERING
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        hidden = tuple(int(h) for h in self.hidden_layers)
        if any(h < 1 for h in hidden):
            raise ValueError(f"hidden widths must be >= 1, got {hidden}")
        if self.kind == "linear":
            hidden = ()
        object.__setattr__(self, "hidden_layers", hidden)
        if self.mode == "plausible" and self.recentering is None:
            raise ValueError("plausible mode requires a recentering")
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.003
    lr_decay: float = 0.95
    augment: bool = False
    beta: float = 10.0
    loss: str = "mae"
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.lr_decay > 0:
            raise ValueError("lr_decay must be positive")
        if not self.beta > 1:
            raise ValueError("beta must be > 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: RegressorSpec
    weights: np.ndarray
    n_outputs: int
    fingerprint: str = ""
    input_scale: float = 1.0
    output_scale: float = 1.0
    final_loss: float = float("nan")
    out_of_range_fraction: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("input_scale", "output_scale"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)
        w = np.array(self.weights, dtype=np.float64, copy=True).ravel()
        expected = n_parameters(layer_shapes(self.spec, self.n_outputs))
        if w.size != expected:
            raise DimensionError(f"expected {expected} parameters, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def params(self):
        return unpack(self.weights, layer_shapes(self.spec, self.n_outputs))


def layer_shapes(spec: RegressorSpec, n_outputs: int, n_inputs: int = 3):
    widths = [n_inputs, *spec.hidden_layers, n_outputs]
    return list(zip(widths[:-1], widths[1:]))


def n_parameters(shapes) -> int:
    return sum(i * o + o for i, o in shapes)


def unpack(flat, shapes):
    """Views ``[(W, b), ...]`` into a flat parameter vector."""
    out, pos = [], 0
    for i, o in shapes:
        W = flat[pos:pos + i * o].reshape(i, o)
        pos += i * o
        b = flat[pos:pos + o]
        pos += o
        out.append((W, b))
    return out


def init_weights(shapes, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights and zero biases."""
    parts = []
    for i, o in shapes:
        lim = math.sqrt(6.0 / (i + o))
        parts.append(rng.uniform(-lim, lim, size=i * o))
        parts.append(np.zeros(o))
    return np.concatenate(parts)


def forward(flat, shapes, X, output_activation="identity"):
    """Run the network on a batch; returns ``(output, pre-activations, inputs per layer)``."""
    layers = unpack(flat, shapes)
    a = X
    acts, pres = [], []
    for depth, (W, b) in enumerate(layers):
        acts.append(a)
        z = a @ W + b
        pres.append(z)
        last = depth == len(layers) - 1
        a = z if last and output_activation == "identity" else np.maximum(z, 0.0)
    return a, pres, acts


def loss_and_grad(flat, shapes, X, T, loss="mae", output_activation="identity"):
    """Mean elementwise loss over a batch and its gradient w.r.t. ``flat``."""
    Y, pres, acts = forward(flat, shapes, X, output_activation)
    diff = Y - T
    count = diff.size
    if loss == "mae":
        value = float(np.mean(np.abs(diff)))
        delta = np.sign(diff) / count
    else:
        value = float(np.mean(diff * diff))
        delta = 2.0 * diff / count
    layers = unpack(flat, shapes)
    grads = []
    for depth in range(len(shapes) - 1, -1, -1):
        last = depth == len(shapes) - 1
        if not last or output_activation == "relu":
            delta = delta * (pres[depth] > 0)
        W, _ = layers[depth]
        grads.append((delta.sum(axis=0), acts[depth].T @ delta))
        delta = delta @ W.T
    flat_grad = []
    for gb, gW in reversed(grads):
        flat_grad.append(gW.ravel())
        flat_grad.append(gb)
    return value, np.concatenate(flat_grad)


def _as_rgb(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    if rho.ndim == 0 or rho.shape[-1] != 3:
        raise DimensionError(f"rgb must have 3 channels, got shape {rho.shape}")
    return rho


def mlp_forward(model: TrainedModel, rho) -> np.ndarray:
    """Raw network output (recentred coefficients or spectra) for ``rho``."""
    rho = _as_rgb(rho)
    flat_in = rho.reshape(-1, 3) / model.input_scale
    shapes = layer_shapes(model.spec, model.n_outputs)
    out, _, _ = forward(model.weights, shapes, flat_in, model.spec.output_activation)
    return (out * model.output_scale).reshape(*rho.shape[:-1], model.n_outputs)


def fit_linear(rgb, targets, spec: RegressorSpec | None = None, fingerprint: str = "") -> TrainedModel:
    """Least-squares affine map ``t ~ W^T rho + b``.

    Rank-deficient designs get the minimum-norm solution, so e.g. a single
    repeated input predicts the mean of its targets.
    """
    X = _as_rgb(rgb).reshape(-1, 3)
    T = np.asarray(targets, dtype=np.float64)
    T = T.reshape(X.shape[0], -1) if T.ndim != 2 else T
    if T.shape[0] != X.shape[0]:
        raise DimensionError("rgb and targets must have the same number of samples")
    if X.shape[0] < 4:
        raise FitError(f"need at least 4 samples for an affine fit, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(T))):
        raise FitError("design matrix or targets contain non-finite values")
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(design, T, rcond=None)
    if spec is None:
        spec = RegressorSpec(mode="direct", kind="linear", output_activation="identity",
                             recentering=None)
    elif spec.kind != "linear":
        spec = replace(spec, kind="linear")
    weights = np.concatenate([coef[:3].ravel(), coef[3]])
    resid = design @ coef - T
    return TrainedModel(spec, weights, T.shape[1], fingerprint,
                        final_loss=float(np.mean(resid * resid)))


def _targets(spec, spectra, null_model):
    if spec.mode == "direct":
        return spectra
    return extract_alpha(null_model, spectra).alpha


def _encode(spec, raw):
    return spec.recentering.apply(raw) if spec.mode == "plausible" else raw


def train(spec: RegressorSpec, cfg: TrainConfig, rgb, spectra,
          null_model: NullSpaceModel | None = None) -> TrainedModel:
    """Fit a regressor to ``(rgb, spectra)`` pairs.

    Plausible mode learns the recentred null coefficients of ``spectra`` and
    needs ``null_model``. With ``cfg.augment`` every presentation of a sample
    is rescaled by a fresh exposure factor; input and label are scaled
    together (coefficients before recentring).
    """
    X = _as_rgb(rgb).reshape(-1, 3)
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    R = np.asarray(spectra, dtype=np.float64)
    R = R.reshape(X.shape[0], -1)
    if spec.mode == "plausible":
        if null_model is None:
            raise ConfigurationError("plausible mode requires a null-space model")
        if R.shape[1] != null_model.bands:
            raise DimensionError("spectra do not match the null model's grid")
    fingerprint = null_model.sensitivities.fingerprint() if null_model is not None else ""
    raw = _targets(spec, R, null_model)
    n_out = raw.shape[1]
    # independent streams for exposure draws and batch shuffling
    xi_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).generate_state(2, dtype=np.uint64)
    sampler = ExposureSampler(cfg.beta, int(xi_seed)) if cfg.augment else None
    rng = np.random.Generator(np.random.PCG64(int(shuffle_seed)))
    meta = {"rng": ExposureSampler.algorithm, "augment": cfg.augment, "beta": cfg.beta,
            "loss": cfg.loss, "epochs": cfg.epochs, "optimizer": cfg.optimizer}

    if spec.kind == "linear":
        if sampler is not None:
            xi = sampler.sample_xi(size=(cfg.epochs, X.shape[0], 1))
            Xs = (X[None] * xi).reshape(-1, 3)
            Ts = _encode(spec, (raw[None] * xi).reshape(-1, n_out))
        else:
            Xs, Ts = X, _encode(spec, raw)
        model = fit_linear(Xs, Ts, spec, fingerprint)
        oor = float(np.mean((Ts < 0) | (Ts > 1))) if spec.mode == "plausible" else 0.0
        return replace(model, out_of_range_fraction=oor, meta=meta)

    # fixed rescaling keeps activations O(1); scalars only, so exposure behaviour is untouched
    input_scale = float(np.mean(X)) if np.mean(X) > 0 else 1.0
    output_scale = 1.0
    if spec.mode == "direct":
        output_scale = float(np.mean(np.abs(raw))) or 1.0
    Xn = X / input_scale
    raw_n = raw / output_scale

    shapes = layer_shapes(spec, n_out)
    w = init_weights(shapes, np.random.Generator(np.random.PCG64(spec.seed)))
    # output bias starts at the mean label so ReLU outputs are not born dead
    w[-n_out:] = np.mean(_encode(spec, raw_n), axis=0)
    m1 = np.zeros_like(w)
    m2 = np.zeros_like(w)
    step = 0
    lr = cfg.learning_rate
    n = X.shape[0]
    out_of_range = 0
    seen = 0
    epoch_loss = float("nan")
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, tb = Xn[idx], raw_n[idx]
            if sampler is not None:
                xi = sampler.sample_xi(size=(idx.size, 1))
                xb, tb = xb * xi, tb * xi
            tb = _encode(spec, tb)
            if spec.mode == "plausible":
                out_of_range += int(np.count_nonzero((tb < 0) | (tb > 1)))
                seen += tb.size
            value, grad = loss_and_grad(w, shapes, xb, tb, cfg.loss, spec.output_activation)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                raise TrainingError(f"non-finite loss in epoch {epoch}", epoch=epoch)
            if cfg.optimizer == "adam":
                step += 1
                m1 = _ADAM_B1 * m1 + (1 - _ADAM_B1) * grad
                m2 = _ADAM_B2 * m2 + (1 - _ADAM_B2) * grad * grad
                m1_hat = m1 / (1 - _ADAM_B1 ** step)
                m2_hat = m2 / (1 - _ADAM_B2 ** step)
                w = w - lr * m1_hat / (np.sqrt(m2_hat) + _ADAM_EPS)
            else:
                w = w - lr * grad
            total += value * idx.size
        epoch_loss = total / n
        if not math.isfinite(epoch_loss) or not np.all(np.isfinite(w)):
            raise TrainingError(f"training diverged in epoch {epoch}", epoch=epoch)
        logger.info("epoch %d loss %.6g lr %.4g", epoch, epoch_loss, lr)
        lr *= cfg.lr_decay
    oor = out_of_range / seen if seen else 0.0
    if oor > 0:
        logger.warning("%.2f%% of recentred labels fell outside [0, 1]", 100 * oor)
    return TrainedModel(spec, w, n_out, fingerprint, input_scale=input_scale,
                        output_scale=output_scale, final_loss=epoch_loss,
                        out_of_range_fraction=oor, meta=meta)


def predict_spectrum(model: TrainedModel, rho, null_model: NullSpaceModel | None = None) -> np.ndarray:
    """Spectra predicted for ``rho``; plausible models reintegrate to ``rho`` exactly."""
    rho = _as_rgb(rho)
    out = mlp_forward(model, rho)
    if model.spec.mode == "direct":
        return out
    if null_model is None:
        raise ConfigurationError("plausible model needs its null-space model to predict")
    if model.fingerprint and model.fingerprint != null_model.sensitivities.fingerprint():
        raise ConfigurationError("model was trained for different camera sensitivities")
    if model.n_outputs != null_model.n_alpha:
        raise DimensionError("model output size does not match the null basis")
    alpha = model.spec.recentering.invert(out)
    return reconstruct(null_model, rho, alpha)


def default_recentering(augment: bool) -> Recentering:
    return AUGMENTED_RECENTERING if augment else UNAUGMENTED_RECENTERING
