"""scikit-learn style wrapper around model building, training and enhancement."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._errors import InputError, ShapeError
from .dataset import Triple
from .dsp import BinauralWaveform, StftConfig
from .model import LbccnConfig, LbccnModel
from .training import TrainConfig, train


def check_binaural_batch(X, min_length: int = StftConfig().fft_size,
                         name: str = "X") -> np.ndarray:
    """Validate ``(n, 2, L)`` (or a single ``(2, L)``) finite real audio."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != 2:
        raise ShapeError(f"{name} must have shape (n_samples, 2, length), got {X.shape}")
    if np.iscomplexobj(X) or not np.issubdtype(X.dtype, np.number):
        raise InputError(f"{name} must hold real-valued samples")
    if X.shape[0] == 0:
        raise InputError(f"{name} holds no samples")
    if X.shape[2] < min_length:
        raise ShapeError(f"{name} length {X.shape[2]} is shorter than one frame ({min_length})")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains NaN or infinite samples")
    return X


def check_paired(X, Y):
    X = check_binaural_batch(X, name="X")
    Y = check_binaural_batch(Y, name="y")
    if X.shape != Y.shape:
        raise ShapeError(f"X and y shapes differ: {X.shape} vs {Y.shape}")
    return X, Y


class LbccnEnhancer(TransformerMixin, BaseEstimator):
    """Fit on (noisy, clean) binaural pairs; ``transform`` returns enhanced audio.

    ``X`` and ``y`` are ``(n_samples, 2, length)`` arrays at 16 kHz.  The
    noise reference used by the objective is ``X - y``.
    """

    def __init__(self, q: int = 40, variant: str = "ratfs", k: float = 0.5, lr: float = 1e-4,
                 epochs: int = 20, batch_size: int = 4, max_steps: int | None = None,
                 seed: int = 0, dtype: str = "complex128"):
        self.q = q
        self.variant = variant
        self.k = k
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.seed = seed
        self.dtype = dtype

    def _config(self) -> LbccnConfig:
        return LbccnConfig(q=self.q, predictor_variant=self.variant)

    def fit(self, X, y):
        X, Y = check_paired(X, y)
        self.model_ = LbccnModel(self._config(), seed=self.seed, dtype=np.dtype(self.dtype))
        data = [Triple(x, c, x.astype(np.float64) - c.astype(np.float64)) for x, c in zip(X, Y)]
        cfg = TrainConfig(k=self.k, lr=self.lr, epochs=self.epochs, batch_size=self.batch_size,
                          seed=self.seed, max_steps=self.max_steps)
        self.result_ = train(self.model_, data, cfg)
        self.loss_curve_ = list(self.result_.epoch_losses)
        self.n_features_in_ = X.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_binaural_batch(X)
        sr = self.model_.config.stft.sample_rate
        return np.stack([self.model_.enhance(BinauralWaveform.from_array(x, sr)).as_array()
                         for x in X])

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        """Mean SNR (dB) of the enhanced signals against ``y``."""
        X, Y = check_paired(X, y)
        est = self.transform(X)
        ref = Y.astype(np.float64)
        num = np.sum(ref ** 2, axis=-1)
        den = np.maximum(np.sum((est - ref) ** 2, axis=-1), 1e-30)
        return float(np.mean(10 * np.log10(num / den)))
