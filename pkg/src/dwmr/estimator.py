"""scikit-learn style wrapper around world-model training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import trainer
from .datasets import OBS_SHAPE, TransitionSet
from .model import binarize
from .probes import encode_bits, imagine_bits


class DiscreteWorldModel(TransformerMixin, BaseEstimator):
    """Learns Boolean state codes and one-step latent dynamics from transitions.

    ``fit(X, actions=..., X_next=...)`` trains on image transitions (N, H, W, C)
    as u8 or [0, 1] floats. ``transform`` returns hard bits; ``predict`` rolls
    bits forward one step.

    Parameters
    ----------
    benchmark, family, variant : str
        Same meaning as the corresponding config keys.
    epochs, batch_size : int or None
        ``None`` keeps the benchmark default.
    random_state : int
        Seeds initialization, shuffling and sampling.
    config : dict or None
        Extra dotted-key overrides, e.g. ``{"loss.lambda_var": 10.0}``.
    """

    def __init__(self, benchmark: str = "puzzle", family: str = "dwmr", variant: str = "two_step",
                 epochs: int | None = None, batch_size: int | None = None, random_state: int = 0,
                 config: dict | None = None):
        self.benchmark = benchmark
        self.family = family
        self.variant = variant
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.config = config

    def _resolved(self) -> dict:
        cfg = {"benchmark": self.benchmark, "family": self.family, "variant": self.variant,
               "seed": int(self.random_state), **(self.config or {})}
        if self.epochs is not None:
            cfg["train.epochs"] = int(self.epochs)
        if self.batch_size is not None:
            cfg["train.batch_size"] = int(self.batch_size)
        return cfg

    def _check_obs(self, X, name: str = "X") -> np.ndarray:
        X = np.asarray(X)
        shape = OBS_SHAPE[self.benchmark]
        if X.ndim != 4 or X.shape[1:] != shape:
            raise ValueError(f"{name} must have shape (N, {', '.join(map(str, shape))}), got {X.shape}")
        if X.dtype == np.uint8:
            return X
        if X.dtype.kind != "f" or not np.all(np.isfinite(X)):
            raise ValueError(f"{name} must be uint8 or finite floats in [0, 1]")
        return np.rint(np.clip(X, 0.0, 1.0) * 255.0).astype(np.uint8)

    def fit(self, X, y=None, *, actions, X_next):
        obs = self._check_obs(X)
        nxt = self._check_obs(X_next, "X_next")
        actions = np.asarray(actions)
        if actions.shape != (len(obs),) or len(nxt) != len(obs):
            raise ValueError("X, actions and X_next must have matching lengths")
        if actions.size and (actions.min() < 0 or actions.max() > 3):
            raise ValueError("actions must be integers in [0, 3]")
        cells = 9 if self.benchmark == "puzzle" else 64
        data = TransitionSet(obs, actions.astype(np.uint8), nxt,
                             np.zeros((len(obs), cells), np.uint8), np.zeros((len(obs), cells), np.uint8),
                             {"benchmark": self.benchmark})
        state = trainer.run_training(self._resolved(), data)
        self.model_ = state.model.eval()
        self.history_ = state.history
        self.n_bits_ = self.model_.n_bits
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return encode_bits(self.model_, self._check_obs(X))

    def predict(self, bits, actions) -> np.ndarray:
        """Hard next-step bits for each (bits, action) pair."""
        check_is_fitted(self, "model_")
        bits = np.asarray(bits, dtype=np.float64)
        if bits.ndim != 2 or bits.shape[1] != self.n_bits_:
            raise ValueError(f"bits must have shape (N, {self.n_bits_}), got {bits.shape}")
        return imagine_bits(self.model_, binarize(bits), np.asarray(actions))

    def imagine(self, X, actions) -> np.ndarray:
        """Encode observations and roll them forward one step."""
        return self.predict(self.transform(X), actions)
