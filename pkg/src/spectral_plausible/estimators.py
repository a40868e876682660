"""scikit-learn compatible wrappers.

``NullSpaceProjector`` is an invertible linear transformer from spectra to
``[rgb, alpha]`` coordinates. ``SpectralReconstructor`` is a regressor from
RGB (n_samples, 3) to spectra (n_samples, n_bands).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataio import load_cie1964
from .exceptions import DimensionError
from .plausible import build_null_model, extract_alpha, reconstruct
from .regression import RegressorSpec, TrainConfig, default_recentering, predict_spectrum, train


def _sensitivities(value):
    return load_cie1964() if value is None else value


class NullSpaceProjector(TransformerMixin, BaseEstimator):
    """Map spectra to ``[rho, alpha]`` and back.

    The first three output columns are the camera response, the remaining
    ``n - 3`` the null-space coefficients. ``fit`` ignores its data; the
    transform is fixed by ``sensitivities`` (default: CIE 1964).
    """

    def __init__(self, sensitivities=None):
        self.sensitivities = sensitivities

    def fit(self, X=None, y=None):
        self.null_model_ = build_null_model(_sensitivities(self.sensitivities))
        self.n_features_in_ = self.null_model_.bands
        return self

    def transform(self, X):
        check_is_fitted(self, "null_model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected {self.n_features_in_} bands, got {X.shape[1]}")
        rho, alpha = extract_alpha(self.null_model_, X)
        return np.hstack([rho, alpha])

    def inverse_transform(self, X):
        check_is_fitted(self, "null_model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return reconstruct(self.null_model_, X[:, :3], X[:, 3:])


class SpectralReconstructor(RegressorMixin, BaseEstimator):
    """Recover spectra from RGB; ``mode="plausible"`` guarantees exact reintegration.

    ``y`` passed to :meth:`fit` are the ground-truth spectra; ``X`` should be
    their camera responses under ``sensitivities``. Leaving ``X`` as ``None``
    simulates it from ``y``.
    """

    def __init__(self, mode="plausible", kind="mlp", hidden_layers=(64, 64),
                 output_activation="relu", recentering=None, augment=False, beta=10.0,
                 epochs=60, batch_size=64, learning_rate=0.003, lr_decay=0.95, loss="mae",
                 optimizer="adam", sensitivities=None, random_state=0):
        self.mode = mode
        self.kind = kind
        self.hidden_layers = hidden_layers
        self.output_activation = output_activation
        self.recentering = recentering
        self.augment = augment
        self.beta = beta
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.loss = loss
        self.optimizer = optimizer
        self.sensitivities = sensitivities
        self.random_state = random_state

    def fit(self, X, y):
        y = check_array(y, dtype=np.float64)
        s = _sensitivities(self.sensitivities)
        self.null_model_ = build_null_model(s)
        if X is None:
            X = y @ s.matrix
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 3:
            raise DimensionError(f"X must have 3 columns (RGB), got {X.shape[1]}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError("X and y have different numbers of samples")
        seed = int(self.random_state or 0)
        rc = self.recentering or default_recentering(self.augment)
        spec = RegressorSpec(mode=self.mode, kind=self.kind,
                             hidden_layers=tuple(self.hidden_layers),
                             output_activation=self.output_activation,
                             recentering=rc if self.mode == "plausible" else None, seed=seed)
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, lr_decay=self.lr_decay,
                          augment=self.augment, beta=self.beta, loss=self.loss, seed=seed,
                          optimizer=self.optimizer)
        self.model_ = train(spec, cfg, X, y, self.null_model_)
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 3:
            raise DimensionError(f"X must have 3 columns (RGB), got {X.shape[1]}")
        return predict_spectrum(self.model_, X, self.null_model_)
