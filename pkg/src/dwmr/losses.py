"""Training objectives: the regularized world-modelling loss and the baselines.

All regularizers act on the bit probabilities ``p`` (N, K) of the current
observations. Reductions run in float64 even when the network is float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import ndcore as nd
from .ndcore import Tensor

EPS = 1e-6
KL_EPS = 1e-7


@dataclass
class LossWeights:
    """Term weights; the prediction weight is fixed at 1."""

    var: float = 25.0
    cor: float = 5.0
    cos: float = 5.0
    loc: float = 1.0
    rec: float = 0.0
    kl: float = 0.0

    pred = 1.0

    def __post_init__(self):
        for name in ("var", "cor", "cos", "loc", "rec", "kl"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


@dataclass(frozen=True)
class LocalityWindow:
    """Desired number of flipped bits per action, ``low <= flips <= high``."""

    low: int = 1
    high: int = 6

    def check(self, n_bits: int) -> None:
        if not 1 <= self.low <= self.high <= n_bits:
            raise ValueError(f"locality window needs 1 <= L <= U <= K, got L={self.low} U={self.high} K={n_bits}")

    def center(self, n_bits: int) -> float:
        return (self.low + self.high) / (2.0 * n_bits)

    def half_width(self, n_bits: int) -> float:
        return (self.high - self.low) / (2.0 * n_bits)


def _f64(p) -> Tensor:
    return nd.astype(nd.as_tensor(p), np.float64)


def batch_var(p: Tensor) -> Tensor:
    """Per-column population variance."""
    centered = p - p.mean(axis=0, keepdims=True)
    return (centered * centered).mean(axis=0)


def normalize_batch(p, eps: float = EPS) -> Tensor:
    """Column-wise (p - mean) / (std + eps) with the population std."""
    p = _f64(p)
    if p.ndim != 2 or p.shape[0] < 2:
        raise ValueError(f"batch normalization needs at least 2 rows, got shape {p.shape}")
    centered = p - p.mean(axis=0, keepdims=True)
    std = nd.sqrt((centered * centered).mean(axis=0, keepdims=True))
    return centered / (std + eps)


def pred_loss(p_hat, b_next) -> Tensor:
    """BCE between predicted next-step probabilities and (detached) target bits."""
    b = b_next.data if isinstance(b_next, Tensor) else np.asarray(b_next)
    return nd.bce(_f64(p_hat), b.astype(np.float64))


def var_loss(p, gamma: float = 0.45, eps: float = EPS) -> Tensor:
    p = _f64(p)
    std = nd.sqrt(batch_var(p) + eps)
    return nd.relu(gamma - std).mean()


@lru_cache(maxsize=8)
def _offdiag_mask(k: int) -> np.ndarray:
    return 1.0 - np.eye(k)


@lru_cache(maxsize=4)
def _distinct_mask(k: int) -> np.ndarray:
    idx = np.arange(k)
    return ((idx[:, None, None] != idx[None, :, None])
            & (idx[None, :, None] != idx[None, None, :])
            & (idx[:, None, None] != idx[None, None, :])).astype(np.float64)


def correlation_matrix(p) -> Tensor:
    pt = normalize_batch(p)
    return (pt.T @ pt) / (pt.shape[0] - 1)


def cor_loss(p) -> Tensor:
    """Mean absolute off-diagonal entry of the (N - 1)-normalized correlation matrix."""
    p = _f64(p)
    k = p.shape[1]
    if k < 2:
        return Tensor(np.zeros((), dtype=np.float64))
    c = correlation_matrix(p)
    return nd.gate(nd.tabs(c), _offdiag_mask(k)).sum() / (k * (k - 1))


def third_moment(pt: Tensor) -> Tensor:
    """M[i, j, k] = mean_n pt[n, i] pt[n, j] pt[n, k]."""
    x = pt.data
    n, k = x.shape
    pairs = (x[:, :, None] * x[:, None, :]).reshape(n, k * k)
    m = (x.T @ pairs).reshape(k, k, k) / n

    def bw(g):
        s = g + g.transpose(1, 0, 2) + g.transpose(2, 0, 1)
        return ((pairs @ s.reshape(k, k * k).T) / n,)

    return nd.make_op(m, (pt,), bw, "third_moment")


def cos_loss(p, sample_triplets: int | None = None, rng: np.random.Generator | None = None) -> Tensor:
    """Mean |standardized third cross-moment| over ordered triplets of distinct bits.

    With ``sample_triplets`` set, averages over that many uniformly drawn
    distinct triplets instead (unbiased for the full value).
    """
    p = _f64(p)
    k = p.shape[1]
    if k < 3:
        return Tensor(np.zeros((), dtype=np.float64))
    pt = normalize_batch(p)
    if sample_triplets is None:
        m = third_moment(pt)
        return nd.gate(nd.tabs(m), _distinct_mask(k)).sum() / (k * (k - 1) * (k - 2))
    rng = rng if rng is not None else np.random.default_rng()
    i, j, l = sample_distinct_triplets(k, sample_triplets, rng)
    prod = pt[:, i] * pt[:, j] * pt[:, l]
    return nd.tabs(prod.mean(axis=0)).mean()


def sample_distinct_triplets(k: int, count: int, rng: np.random.Generator):
    out = np.empty((0, 3), dtype=np.int64)
    while len(out) < count:
        draw = rng.integers(k, size=(2 * (count - len(out)) + 8, 3))
        ok = (draw[:, 0] != draw[:, 1]) & (draw[:, 1] != draw[:, 2]) & (draw[:, 0] != draw[:, 2])
        out = np.concatenate([out, draw[ok]])
    out = out[:count]
    return out[:, 0], out[:, 1], out[:, 2]


def flip_distance(p, b_next) -> Tensor:
    """Soft Hamming distance per row, counting only entries with |p - b'| > 0.5,
    normalized by 0.75 K."""
    p = _f64(p)
    b = b_next.data if isinstance(b_next, Tensor) else np.asarray(b_next, dtype=np.float64)
    diff = nd.tabs(p - b.astype(np.float64))
    active = diff.data > 0.5
    k = p.shape[1]
    return nd.gate(diff, active).sum(axis=1) / (0.75 * k)


def loc_loss(p, b_next, window: LocalityWindow = LocalityWindow()) -> Tensor:
    k = np.shape(p.data if isinstance(p, Tensor) else p)[1]
    d = flip_distance(p, b_next)
    m, w = window.center(k), window.half_width(k)
    excess = nd.relu(nd.tabs(d - m) - w)
    return (excess * excess).mean()


def rec_loss(x_hat: Tensor, x) -> Tensor:
    return nd.mse(_f64(x_hat), _f64(x))


def kl_loss(p) -> Tensor:
    """KL of each Bernoulli bit to Bernoulli(0.5), averaged over rows and bits."""
    q = nd.clip(_f64(p), KL_EPS, 1.0 - KL_EPS)
    one_minus = 1.0 - q
    terms = q * nd.log(q * 2.0) + one_minus * nd.log(one_minus * 2.0)
    return terms.mean()


def binary_concrete_sample(logits: Tensor, rng: np.random.Generator | None = None,
                           temperature: float = 1.0, u: np.ndarray | None = None) -> Tensor:
    """Relaxed Bernoulli: sigmoid((logits + log u - log(1 - u)) / temperature).

    The noise is a constant, so gradients flow to ``logits`` only.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if u is None:
        rng = rng if rng is not None else np.random.default_rng()
        u = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=logits.shape)
    u = np.asarray(u, dtype=np.float64)
    noise = (np.log(u) - np.log1p(-u)).astype(logits.dtype)
    return nd.sigmoid((logits + noise) * (1.0 / temperature))


def deepcubeai_loss(p, p_next, p_hat, x=None, x_next=None,
                    decode: Callable[[Tensor], Tensor] | None = None,
                    lambda_rec: float = 0.0) -> tuple[Tensor, dict[str, float]]:
    """Rounded-latent consistency plus two-frame reconstruction.

    pred' = 1/2 MSE(r(p'), sg(r(p_hat))) + 1/2 MSE(p_hat, sg(r(p')))
    rec'  = 1/2 MSE(dec(p), x) + 1/2 MSE(dec(p'), x')
    with r the straight-through rounding.
    """
    p_next, p_hat = _f64(p_next), _f64(p_hat)
    r_next = nd.st_round(p_next)
    lp = 0.5 * nd.mse(r_next, nd.stop_gradient(nd.st_round(p_hat))) \
        + 0.5 * nd.mse(p_hat, nd.stop_gradient(r_next))
    terms = {"pred": float(lp.data)}
    total = lp
    if lambda_rec and decode is not None:
        lr = 0.5 * rec_loss(decode(p), x) + 0.5 * rec_loss(decode(p_next), x_next)
        terms["rec"] = float(lr.data)
        total = total + lambda_rec * lr
    return total, terms


def total_dwmr(p, p_hat, b_next, weights: LossWeights = LossWeights(), gamma: float = 0.45,
               window: LocalityWindow = LocalityWindow(), cos_triplets: int | None = None,
               rng: np.random.Generator | None = None) -> tuple[Tensor, dict[str, float]]:
    """pred + var + cor + cos + loc, each weighted; regularizers see only ``p``.

    Terms with zero weight are reported but not put on the graph.
    """
    lp = pred_loss(p_hat, b_next)
    terms = {"pred": float(lp.data)}
    total = lp
    parts = {
        "var": (weights.var, lambda: var_loss(p, gamma)),
        "cor": (weights.cor, lambda: cor_loss(p)),
        "cos": (weights.cos, lambda: cos_loss(p, cos_triplets, rng)),
        "loc": (weights.loc, lambda: loc_loss(p, b_next, window)),
    }
    for name, (lam, fn) in parts.items():
        if lam:
            term = fn()
            total = total + lam * term
        else:
            with nd.no_grad():
                term = fn()
        terms[name] = float(term.data)
    return total, terms
