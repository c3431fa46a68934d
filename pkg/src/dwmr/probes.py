"""Linear probes on frozen Boolean latents and the encoding/imagination protocol."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import ndcore as nd
from .datasets import N_CELLS, N_CLASSES, TransitionSet
from .model import WorldModel, binarize


class LinearProbe(ClassifierMixin, BaseEstimator):
    """Per-cell softmax readout with a single linear stage.

    ``kind="affine"`` maps the whole bit vector to ``n_cells`` heads;
    ``kind="conv1x1"`` reads each grid cell from its own channel column with
    weights shared across cells (a 1x1 convolution over the bit grid).
    """

    def __init__(self, kind: str = "affine", n_cells: int = 9, n_classes: int = 9, epochs: int = 15,
                 lr: float = 0.01, weight_decay: float = 0.001, batch_size: int = 256,
                 random_state: int = 0):
        self.kind = kind
        self.n_cells = n_cells
        self.n_classes = n_classes
        self.epochs = epochs
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.random_state = random_state

    @classmethod
    def for_benchmark(cls, benchmark: str, **kw) -> "LinearProbe":
        kind = "affine" if benchmark == "puzzle" else "conv1x1"
        return cls(kind=kind, n_cells=N_CELLS[benchmark], n_classes=N_CLASSES[benchmark], **kw)

    # rows of the design matrix, one per (record, cell)
    def _rows(self, bits: np.ndarray) -> np.ndarray:
        if self.kind == "affine":
            return bits
        n = len(bits)
        channels = bits.shape[1] // self.n_cells
        return bits.reshape(n, channels, self.n_cells).transpose(0, 2, 1).reshape(n * self.n_cells, channels)

    def _logits(self, rows: nd.Tensor, n: int) -> nd.Tensor:
        out = nd.linear(rows, self.weight_, self.bias_)
        return out.reshape(n * self.n_cells, self.n_classes)

    def _check_bits(self, bits) -> np.ndarray:
        bits = check_array(bits, dtype=np.float64)
        if self.kind == "conv1x1" and bits.shape[1] % self.n_cells:
            raise ValueError(f"{bits.shape[1]} bits do not form a grid of {self.n_cells} cells")
        return bits

    def fit(self, X, y):
        bits = self._check_bits(X)
        labels = check_array(y, dtype=np.int64)
        if labels.shape != (len(bits), self.n_cells):
            raise ValueError(f"labels must have shape (N, {self.n_cells}), got {labels.shape}")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if self.kind not in ("affine", "conv1x1"):
            raise ValueError(f"unknown probe kind {self.kind!r}")
        rng = np.random.default_rng(self.random_state)
        n_in = bits.shape[1] if self.kind == "affine" else bits.shape[1] // self.n_cells
        n_out = self.n_cells * self.n_classes if self.kind == "affine" else self.n_classes
        bound = 1.0 / np.sqrt(n_in)
        self.weight_ = nd.Parameter(rng.uniform(-bound, bound, (n_out, n_in)))
        self.bias_ = nd.Parameter(np.zeros(n_out))
        opt = nd.Adam([("weight", self.weight_), ("bias", self.bias_)], lr=self.lr,
                      weight_decay=self.weight_decay)
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            perm = np.random.default_rng([self.random_state, epoch]).permutation(len(bits))
            total = 0.0
            for start in range(0, len(bits), self.batch_size):
                idx = perm[start:start + self.batch_size]
                logits = self._logits(nd.Tensor(self._rows(bits[idx])), len(idx))
                loss = nd.softmax_ce(logits, labels[idx].reshape(-1))
                opt.zero_grad()
                nd.backward(loss)
                opt.step()
                total += float(loss.data) * len(idx)
            self.loss_curve_.append(total / len(bits))
        self.classes_ = np.arange(self.n_classes)
        self.n_features_in_ = bits.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "weight_")
        bits = self._check_bits(X)
        with nd.no_grad():
            logits = self._logits(nd.Tensor(self._rows(bits)), len(bits))
        return logits.data.reshape(len(bits), self.n_cells, self.n_classes)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(axis=2)

    def score(self, X, y, sample_weight=None) -> float:
        return float((self.predict(X) == np.asarray(y)).mean())


def macro_f1(pred: np.ndarray, true: np.ndarray) -> float:
    """Unweighted mean F1 over classes occurring in either labelling."""
    scores = []
    for c in np.union1d(pred, true):
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = np.sum((pred != c) & (true == c))
        scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(scores))


def per_cell_scores(pred, true) -> dict:
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape or pred.ndim != 2:
        raise ValueError(f"predictions {pred.shape} and truths {true.shape} must both be (N, cells)")
    f1 = np.array([macro_f1(pred[:, c], true[:, c]) for c in range(pred.shape[1])]) * 100.0
    acc = (pred == true).mean(axis=0) * 100.0
    return {"f1": f1, "accuracy": acc, "mean_f1": float(f1.mean()), "mean_acc": float(acc.mean())}


@dataclass
class EvalReport:
    benchmark: str
    mode: str
    mean_f1: float
    mean_acc: float
    per_cell: list[dict] = field(default_factory=list)
    noise: bool = False
    family: str = ""
    variant: str = ""
    seed: int = 0

    @classmethod
    def from_scores(cls, scores: dict, benchmark: str, mode: str, **info) -> "EvalReport":
        cells = [{"cell": i, "f1": float(f), "acc": float(a)}
                 for i, (f, a) in enumerate(zip(scores["f1"], scores["accuracy"]))]
        return cls(benchmark, mode, scores["mean_f1"], scores["mean_acc"], cells, **info)

    def to_dict(self) -> dict:
        keys = ("benchmark", "noise", "family", "variant", "seed", "mode", "mean_f1", "mean_acc", "per_cell")
        d = asdict(self)
        return {k: d[k] for k in keys}

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(**d)


def encode_bits(model: WorldModel, obs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Hard bits from the frozen online encoder, computed in eval mode."""
    model.eval()
    out = []
    with nd.no_grad():
        for i in range(0, len(obs), batch_size):
            out.append(binarize(model.encode(obs[i:i + batch_size]).data))
    return np.concatenate(out).astype(np.float64)


def imagine_bits(model: WorldModel, bits: np.ndarray, actions: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """One-step latent roll-out: binarize(predict(b, a))."""
    model.eval()
    out = []
    with nd.no_grad():
        for i in range(0, len(bits), batch_size):
            p = model.predict(bits[i:i + batch_size].astype(model.dtype), actions[i:i + batch_size])
            out.append(binarize(p.data))
    return np.concatenate(out).astype(np.float64)


def fit_probe(bits: np.ndarray, truths: np.ndarray, benchmark: str, **kw) -> LinearProbe:
    return LinearProbe.for_benchmark(benchmark, **kw).fit(bits, truths)


def eval_encoding(model: WorldModel, probe: LinearProbe, split: TransitionSet, **info) -> EvalReport:
    bits = encode_bits(model, split.obs)
    scores = per_cell_scores(probe.predict(bits), split.truth)
    return EvalReport.from_scores(scores, model.arch.benchmark, "encoding", **info)


def eval_imagination(model: WorldModel, probe: LinearProbe, split: TransitionSet, **info) -> EvalReport:
    bits = encode_bits(model, split.obs)
    nxt = imagine_bits(model, bits, split.actions)
    scores = per_cell_scores(probe.predict(nxt), split.truth_next)
    return EvalReport.from_scores(scores, model.arch.benchmark, "imagination", **info)


def evaluate(model: WorldModel, fit_split: TransitionSet, report_split: TransitionSet,
             probe_kw: dict | None = None, **info) -> tuple[EvalReport, EvalReport]:
    """Fit a probe on ``fit_split`` latents, then report both modes on ``report_split``."""
    bench = model.arch.benchmark
    probe = fit_probe(encode_bits(model, fit_split.obs), fit_split.truth, bench, **(probe_kw or {}))
    return eval_encoding(model, probe, report_split, **info), eval_imagination(model, probe, report_split, **info)


__all__ = ["LinearProbe", "EvalReport", "macro_f1", "per_cell_scores", "encode_bits", "imagine_bits",
           "fit_probe", "eval_encoding", "eval_imagination", "evaluate"]
