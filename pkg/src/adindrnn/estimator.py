"""scikit-learn compatible wrapper around the training engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted

from .model import ModelSpec, build_model, extract_attention_weights
from .training import TrainConfig, predict_logits, train


def _check_sequences(X, dtype) -> np.ndarray:
    """Validate ``X`` as ``(samples, steps, channels)``; 2-D input is one channel."""
    X = check_array(X, allow_nd=True, dtype=dtype, ensure_min_samples=1)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ValueError(f"expected a (samples, steps, channels) array, got shape {X.shape}")
    return X


class ADIndRNNClassifier(ClassifierMixin, BaseEstimator):
    """Seizure / nonseizure classifier over multichannel windows.

    Parameters
    ----------
    architecture : str
        Model name, e.g. ``"ADIndRNN-(3,3)"``, ``"DIndRNN-(3,3)"``,
        ``"AIndRNN-9"`` or ``"IndRNN-12"``.
    state_sizes : list of int, optional
        Hidden sizes per block (dense variants) or per layer (plain stacks).
    fc_hidden : int
        Units in the first fully connected layer.
    learning_rate, batch_size, epochs, weight_decay
        Optimiser settings; the defaults are the full-scale reference settings.
    validation_fraction : float
        Share of the training data held out for checkpoint selection when
        ``fit`` receives no explicit validation set. ``0`` disables it.
    decimate : int
        Keep every ``decimate``-th time step.
    dtype : {"float64", "float32"}
    random_state : int

    Attributes
    ----------
    classes_ : ndarray of shape (2,)
        ``classes_[1]`` is treated as the seizure (positive) class.
    params_ : ModelParams
    history_ : list of dict
        Per-epoch training and validation loss and validation accuracy.
    """

    def __init__(
        self,
        architecture="ADIndRNN-(3,3)",
        state_sizes=None,
        fc_hidden=100,
        learning_rate=0.0004,
        batch_size=30,
        epochs=60,
        weight_decay=0.01,
        validation_fraction=0.15,
        decimate=1,
        dtype="float64",
        recurrent_clip=None,
        random_state=0,
    ):
        self.architecture = architecture
        self.state_sizes = state_sizes
        self.fc_hidden = fc_hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.validation_fraction = validation_fraction
        self.decimate = decimate
        self.dtype = dtype
        self.recurrent_clip = recurrent_clip
        self.random_state = random_state

    def _prepare(self, X):
        X = _check_sequences(X, self.dtype)
        return X[:, :: self.decimate] if self.decimate > 1 else X

    def fit(self, X, y, X_val=None, y_val=None):
        X = self._prepare(X)
        y = np.asarray(y)
        check_classification_targets(y)
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} samples but y has {len(y)}")
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        if len(self.classes_) != 2:
            raise ValueError(f"exactly two classes are required, got {len(self.classes_)}")
        y_enc = self._encoder.transform(y)

        if X_val is not None:
            X_tr, y_tr = X, y_enc
            X_va = self._prepare(X_val)
            y_va = self._encoder.transform(np.asarray(y_val))
        elif self.validation_fraction:
            X_tr, X_va, y_tr, y_va = train_test_split(
                X, y_enc, test_size=self.validation_fraction, stratify=y_enc, random_state=self.random_state
            )
        else:
            X_tr, y_tr = X, y_enc
            X_va, y_va = X[:0], y_enc[:0]

        self.n_features_in_ = X.shape[2]
        self.n_steps_ = X.shape[1]
        self.spec_ = ModelSpec.from_name(
            self.architecture,
            n_channels=self.n_features_in_,
            state_sizes=self.state_sizes,
            fc_sizes=(self.fc_hidden, 2),
            n_steps=self.n_steps_,
            recurrent_clip=self.recurrent_clip,
            dtype=self.dtype,
        )
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            weight_decay=self.weight_decay,
            seed=self.random_state,
        )
        params = build_model(self.spec_, rng_seed=self.random_state)
        self.params_, self.history_ = train(self.spec_, X_tr, y_tr, X_va, y_va, cfg, params=params)
        return self

    def decision_function(self, X):
        """Seizure-minus-nonseizure logit difference."""
        logits = self._logits(X)
        return logits[:, 1] - logits[:, 0]

    def _logits(self, X):
        check_is_fitted(self, "params_")
        X = self._prepare(X)
        if X.shape[2] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[2]} channels, the model was fitted on {self.n_features_in_}")
        return predict_logits(self.params_, X)

    def predict_proba(self, X):
        logits = self._logits(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        logits = self._logits(X)
        return self.classes_[logits.argmax(axis=1)]

    def attention_weights(self, X):
        """Per-sample channel weights, shape ``(n_samples, n_channels)``."""
        check_is_fitted(self, "params_")
        return extract_attention_weights(self.params_, self._prepare(X))
