"""Training loops for the three optimization variants and all model families.

One call to :func:`train_step` consumes a minibatch of transitions and
performs either one joint optimizer step (``fully_differentiable``,
``straight_through``) or a predictor-only step followed by a joint step
(``two_step``). The EMA target encoder is refreshed after every optimizer
step.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import config as C
from . import losses as L
from . import ndcore as nd
from .datasets import TransitionSet
from .model import ArchConfig, WorldModel, binarize
from .ndcore import Tensor, checkpoint

log = logging.getLogger(__name__)

METRIC_FIELDS = ("epoch", "step", "loss_total", "loss_pred", "loss_var", "loss_cor", "loss_cos",
                 "loss_loc", "loss_rec", "loss_kl", "mean_bit", "mean_bit_std", "mean_flips",
                 "lr_enc", "lr_pred", "tau")
TERMS = ("pred", "var", "cor", "cos", "loc", "rec", "kl")
TAU_MAX = 0.9999
CKPT_VERSION = 1
DECODER_FAMILIES = ("ae", "bvae", "deepcubeai", "dwmr+ae", "dwmr+bvae")
NOISY_FAMILIES = ("bvae", "dwmr+bvae")
DWMR_FAMILIES = ("dwmr", "dwmr+ae", "dwmr+bvae")


@dataclass
class TrainConfig:
    benchmark: str = "puzzle"
    family: str = "dwmr"
    variant: str = "two_step"
    epochs: int = 40
    batch_size: int = 256
    lr_enc: float = 1e-3
    lr_pred: float = 1e-3
    lr_dec: float = 1e-3
    tau: float = 0.9
    weights: L.LossWeights = field(default_factory=L.LossWeights)
    gamma: float = 0.45
    window: L.LocalityWindow = field(default_factory=L.LocalityWindow)
    factors: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    arch: ArchConfig = field(default_factory=ArchConfig)
    two_step_b_input: str = "soft"
    cos_triplets: int | None = None
    bvae_temperature: float = 1.0
    ema: bool = True
    log_steps: bool = False
    checkpoint_every: int = 1

    @classmethod
    def from_dict(cls, cfg: dict[str, Any]) -> "TrainConfig":
        cfg = C.resolve(cfg)
        return cls(
            benchmark=cfg["benchmark"], family=cfg["family"], variant=cfg["variant"],
            epochs=int(cfg["train.epochs"]), batch_size=int(cfg["train.batch_size"]),
            lr_enc=float(cfg["train.lr_enc"]), lr_pred=float(cfg["train.lr_pred"]),
            lr_dec=float(cfg["train.lr_dec"]), tau=float(cfg["train.tau"]),
            weights=C.weights(cfg), gamma=float(cfg["loss.gamma"]), window=C.window(cfg),
            factors={k: float(cfg[f"schedule.{k}"]) for k in C.SCHEDULED}, seed=int(cfg["seed"]),
            arch=C.arch(cfg), two_step_b_input=cfg["train.two_step_b_input"],
            cos_triplets=cfg["train.cos_triplets"], bvae_temperature=float(cfg["train.bvae_temperature"]),
            ema=bool(cfg["train.ema"]), log_steps=bool(cfg["train.log_steps"]),
            checkpoint_every=int(cfg["train.checkpoint_every"]),
        )

    @property
    def has_decoder(self) -> bool:
        return self.family in DECODER_FAMILIES

    def base_values(self) -> dict[str, float]:
        w = self.weights
        return {"lr_enc": self.lr_enc, "lr_pred": self.lr_pred, "lr_dec": self.lr_dec, "tau": self.tau,
                "lambda_var": w.var, "lambda_cor": w.cor, "lambda_cos": w.cos, "lambda_loc": w.loc,
                "lambda_rec": w.rec, "lambda_kl": w.kl}


def scheduled_values(base: dict[str, float], factors: dict[str, float], epoch: int) -> dict[str, float]:
    """base * factor**epoch per quantity, with tau clamped to (0, 0.9999]."""
    for name, f in factors.items():
        if not C.FACTOR_RANGE[0] <= f <= C.FACTOR_RANGE[1]:
            raise C.ConfigError(f"schedule factor {name}={f} outside {list(C.FACTOR_RANGE)}")
    out = {name: value * factors.get(name, 1.0) ** epoch for name, value in base.items()}
    if "tau" in out:
        out["tau"] = min(max(out["tau"], np.finfo(np.float64).tiny), TAU_MAX)
    return out


@dataclass
class RunState:
    config: TrainConfig
    model: WorldModel
    optimizers: dict[str, nd.Adam]
    epoch: int = 0
    step: int = 0
    values: dict[str, float] = field(default_factory=dict)
    history: list[dict[str, float]] = field(default_factory=list)
    rng: np.random.Generator | None = None

    @property
    def tau(self) -> float:
        return self.values["tau"] if self.config.ema else 0.0

    @property
    def loss_weights(self) -> L.LossWeights:
        v = self.values
        return L.LossWeights(var=v["lambda_var"], cor=v["lambda_cor"], cos=v["lambda_cos"],
                             loc=v["lambda_loc"], rec=v["lambda_rec"], kl=v["lambda_kl"])

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch
        self.values = scheduled_values(self.config.base_values(), self.config.factors, epoch)
        for key, opt in self.optimizers.items():
            opt.lr = self.values[f"lr_{key}"]
        self.rng = np.random.default_rng([self.config.seed, epoch, 0xB17])

    def optimizer_steps(self) -> int:
        # every optimizer step (joint or predictor-only) moves the predictor
        return self.optimizers["pred"].step_count


def build_state(config: TrainConfig, dtype=np.float32) -> RunState:
    model = WorldModel.build(config.arch, seed=config.seed, with_decoder=config.has_decoder, dtype=dtype)
    opts = {
        "enc": nd.Adam(model.encoder.named_parameters(), lr=config.lr_enc),
        "pred": nd.Adam(model.predictor.named_parameters(), lr=config.lr_pred),
    }
    if model.decoder is not None:
        opts["dec"] = nd.Adam(model.decoder.named_parameters(), lr=config.lr_dec)
    state = RunState(config, model, opts)
    state.set_epoch(0)
    if not config.ema:
        model.ema_update(0.0)
    return state


# --------------------------------------------------------------------- steps
@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray

    @classmethod
    def take(cls, ts: TransitionSet, idx) -> "Batch":
        return cls(ts.obs[idx], ts.actions[idx], ts.next_obs[idx])

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class Encoded:
    """Per-batch encoder outputs, computed once and shared by both sub-steps."""

    x: Tensor
    x_next: Tensor
    p: Tensor            # probabilities the objective sees (noisy for beta-VAE families)
    p_clean: Tensor      # sigmoid(logits)
    b_next: np.ndarray   # target-encoder bits for x'
    p_next: Tensor | None = None  # online encoding of x' (DeepCubeAI only)


def _optimizer_step(state: RunState, keys) -> None:
    for key in keys:
        if key in state.optimizers:
            state.optimizers[key].step()
    state.model.ema_update(state.tau)


def _zero_grad(state: RunState) -> None:
    for opt in state.optimizers.values():
        opt.zero_grad()


def encode_batch(state: RunState, batch: Batch, training: bool = True) -> Encoded:
    cfg, model = state.config, state.model
    x, x_next = model.input(batch.obs), model.input(batch.next_obs)
    logits = model.encoder.logits(x)
    p_clean = nd.sigmoid(logits)
    p = p_clean
    if training and cfg.family in NOISY_FAMILIES:
        p = L.binary_concrete_sample(logits, state.rng, cfg.bvae_temperature)
    b_next = binarize(model.encode(x_next, target=True))
    p_next = model.encoder(x_next) if cfg.family == "deepcubeai" else None
    return Encoded(x, x_next, p, p_clean, b_next, p_next)


def family_objective(state: RunState, enc: Encoded, pred_input: Tensor,
                     actions) -> tuple[Tensor, dict[str, float], Tensor]:
    """Full family loss given the predictor input; returns (total, terms, p_hat)."""
    cfg, model = state.config, state.model
    w = state.loss_weights
    p_hat = model.predict(pred_input, actions)
    terms = dict.fromkeys(TERMS, 0.0)
    if cfg.family == "deepcubeai":
        decode = model.decode if w.rec else None
        total, parts = L.deepcubeai_loss(enc.p, enc.p_next, p_hat, enc.x, enc.x_next, decode, w.rec)
        terms.update(parts)
        return total, terms, p_hat
    if cfg.family in DWMR_FAMILIES:
        total, parts = L.total_dwmr(enc.p, p_hat, enc.b_next, w, cfg.gamma, cfg.window,
                                    cfg.cos_triplets, state.rng)
    else:
        total = L.pred_loss(p_hat, enc.b_next)
        parts = {"pred": float(total.data)}
    terms.update(parts)
    if model.decoder is not None and w.rec:
        rec = L.rec_loss(model.decode(enc.p), enc.x)
        terms["rec"] = float(rec.data)
        total = total + w.rec * rec
    if cfg.family in NOISY_FAMILIES and w.kl:
        kl = L.kl_loss(enc.p_clean)
        terms["kl"] = float(kl.data)
        total = total + w.kl * kl
    return total, terms, p_hat


def _step_stats(enc: Encoded) -> dict[str, float]:
    b = binarize(enc.p_clean.data).astype(np.float64)
    return {
        "mean_bit": float(b.mean()),
        "mean_bit_std": float(b.std(axis=0).mean()),
        "mean_flips": float(np.abs(b - enc.b_next).sum(axis=1).mean()),
    }


def _joint_step(state: RunState, batch: Batch, enc: Encoded, pred_input: Tensor) -> dict[str, float]:
    _zero_grad(state)
    total, terms, _ = family_objective(state, enc, pred_input, batch.actions)
    nd.backward(total)
    _optimizer_step(state, ("enc", "pred", "dec"))
    return {"total": float(total.data), **terms}


def train_step_fully_differentiable(state: RunState, batch: Batch) -> dict[str, float]:
    enc = encode_batch(state, batch)
    out = _joint_step(state, batch, enc, enc.p)
    return {**out, **_step_stats(enc)}


def train_step_straight_through(state: RunState, batch: Batch) -> dict[str, float]:
    enc = encode_batch(state, batch)
    out = _joint_step(state, batch, enc, nd.st_round(enc.p))
    return {**out, **_step_stats(enc)}


def predictor_step(state: RunState, batch: Batch, enc: Encoded) -> float:
    """Step (a): fit the predictor on hard bits; the encoder is not on the graph."""
    b = Tensor(binarize(enc.p.data))
    p_hat = state.model.predict(b, batch.actions)
    if state.config.family == "deepcubeai":
        target = binarize(enc.p_next.data)
        loss = 0.5 * nd.mse(nd.astype(p_hat, np.float64), target.astype(np.float64))
    else:
        loss = L.pred_loss(p_hat, enc.b_next)
    _zero_grad(state)
    nd.backward(loss)
    _optimizer_step(state, ("pred",))
    return float(loss.data)


def train_step_two_step(state: RunState, batch: Batch) -> dict[str, float]:
    enc = encode_batch(state, batch)
    predictor_step(state, batch, enc)
    pin = enc.p if state.config.two_step_b_input == "soft" else nd.st_round(enc.p)
    out = _joint_step(state, batch, enc, pin)
    return {**out, **_step_stats(enc)}


STEPS = {
    "fully_differentiable": train_step_fully_differentiable,
    "straight_through": train_step_straight_through,
    "two_step": train_step_two_step,
}


def train_step(state: RunState, batch: Batch) -> dict[str, float]:
    state.model.train()
    out = STEPS[state.config.variant](state, batch)
    state.step += 1
    return out


# ----------------------------------------------------------------- epochs
def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Seeded shuffle; a trailing batch smaller than 2 is dropped."""
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    out = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    return [b for b in out if len(b) >= 2]


def _row(state: RunState, epoch_label: int, stats: list[dict[str, float]]) -> dict[str, float]:
    mean = {k: float(np.mean([s[k] for s in stats])) for k in stats[0]}
    row = {"epoch": epoch_label, "step": state.step, "loss_total": mean["total"]}
    row.update({f"loss_{t}": mean[t] for t in TERMS})
    row.update({k: mean[k] for k in ("mean_bit", "mean_bit_std", "mean_flips")})
    row.update(lr_enc=state.values["lr_enc"], lr_pred=state.values["lr_pred"], tau=state.tau)
    return row


def format_row(row: dict[str, float]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(
        [row[k] if k in ("epoch", "step") else repr(float(row[k])) for k in METRIC_FIELDS])
    return buf.getvalue()


def run_epoch(state: RunState, data: TransitionSet, step_log=None) -> dict[str, float]:
    cfg = state.config
    stats = []
    for idx in epoch_batches(len(data), cfg.batch_size, cfg.seed, state.epoch):
        s = train_step(state, Batch.take(data, idx))
        stats.append(s)
        if step_log is not None:
            step_log.write(format_row(_row(state, state.epoch + 1, [s])))
    if not stats:
        raise ValueError("training split has fewer than 2 records")
    row = _row(state, state.epoch + 1, stats)
    state.history.append(row)
    state.set_epoch(state.epoch + 1)
    return row


# ------------------------------------------------------------- checkpoints
def checkpoint_arrays(state: RunState) -> dict[str, np.ndarray]:
    arrays = {f"model.{k}": v for k, v in state.model.state_dict().items()}
    for key, opt in state.optimizers.items():
        arrays.update({f"opt.{key}.{k}": v for k, v in opt.state_dict().items()})
    arrays["meta.version"] = np.array([CKPT_VERSION], dtype=np.float64)
    arrays["meta.epoch"] = np.array([state.epoch], dtype=np.float64)
    arrays["meta.step"] = np.array([state.step], dtype=np.float64)
    for name, value in sorted(state.values.items()):
        arrays[f"sched.{name}"] = np.array([value], dtype=np.float64)
    return arrays


def save_checkpoint(state: RunState, path: str | os.PathLike) -> None:
    checkpoint.save(path, checkpoint_arrays(state))


def load_checkpoint(state: RunState, path: str | os.PathLike) -> RunState:
    """Restore model, optimizer moments, epoch counter and scheduled values in place."""
    arrays = checkpoint.load(path)
    version = int(arrays.get("meta.version", [-1])[0])
    if version != CKPT_VERSION:
        raise checkpoint.CheckpointError(f"checkpoint version {version}, expected {CKPT_VERSION}")

    def section(prefix):
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    try:
        state.model.load_state_dict(section("model."))
    except (KeyError, ValueError) as exc:
        raise nd.ShapeError(f"checkpoint does not fit this model: {exc}") from exc
    for key, opt in state.optimizers.items():
        opt.load_state_dict(section(f"opt.{key}."))
    state.set_epoch(int(arrays["meta.epoch"][0]))
    state.step = int(arrays["meta.step"][0])
    state.values = {k: float(v[0]) for k, v in section("sched.").items()}
    for key, opt in state.optimizers.items():
        opt.lr = state.values[f"lr_{key}"]
    return state


def checkpoint_name(epoch: int) -> str:
    return f"ckpt_epoch{epoch:03d}.bin"


def latest_checkpoint(out_dir: str | os.PathLike) -> Path | None:
    found = sorted(Path(out_dir).glob("ckpt_epoch*.bin"))
    return found[-1] if found else None


# ------------------------------------------------------------------ driver
def run_training(config: TrainConfig | dict[str, Any], train: TransitionSet,
                 out_dir: str | os.PathLike | None = None, resume: bool = False) -> RunState:
    """Train for ``config.epochs`` epochs, writing metrics.csv and per-epoch checkpoints."""
    if isinstance(config, dict):
        config = TrainConfig.from_dict(config)
    nd.tune_allocator()
    bench = train.meta.get("benchmark")
    if bench is not None and bench != config.benchmark:
        raise ValueError(f"dataset is for benchmark {bench!r} but the config trains {config.benchmark!r}")
    expected = (88, 88, 1) if config.benchmark == "puzzle" else (64, 64, 3)
    if train.obs.shape[1:] != expected:
        raise ValueError(f"observations of shape {train.obs.shape[1:]} do not match {config.benchmark} {expected}")

    state = build_state(config)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv" if out is not None else None
    if resume and out is not None and (ckpt := latest_checkpoint(out)) is not None:
        load_checkpoint(state, ckpt)
        log.info("resumed from %s at epoch %d", ckpt.name, state.epoch)
        _truncate_metrics(metrics_path, state.epoch)
    elif metrics_path is not None:
        metrics_path.write_text(",".join(METRIC_FIELDS) + "\n")
    step_log = None
    if out is not None and config.log_steps:
        step_path = out / "metrics_steps.csv"
        mode = "a" if resume and step_path.exists() else "w"
        step_log = open(step_path, mode, encoding="utf-8", newline="")
        if mode == "w":
            step_log.write(",".join(METRIC_FIELDS) + "\n")
    try:
        while state.epoch < config.epochs:
            row = run_epoch(state, train, step_log)
            log.info("epoch %d/%d total %.4f pred %.4f var %.4f flips %.2f", row["epoch"], config.epochs,
                     row["loss_total"], row["loss_pred"], row["loss_var"], row["mean_flips"])
            if metrics_path is not None:
                with open(metrics_path, "a", encoding="utf-8", newline="") as fh:
                    fh.write(format_row(row))
                if state.epoch % config.checkpoint_every == 0 or state.epoch == config.epochs:
                    save_checkpoint(state, out / checkpoint_name(state.epoch))
    finally:
        if step_log is not None:
            step_log.close()
    return state


def _truncate_metrics(path: Path | None, epochs_done: int) -> None:
    if path is None or not path.exists():
        if path is not None:
            path.write_text(",".join(METRIC_FIELDS) + "\n")
        return
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:1 + epochs_done]))


def read_metrics(path: str | os.PathLike) -> list[dict[str, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def load_model(cfg: dict[str, Any], ckpt_path: str | os.PathLike) -> WorldModel:
    state = build_state(TrainConfig.from_dict(cfg))
    load_checkpoint(state, ckpt_path)
    return state.model.eval()
