"""Flat dotted-key run configuration.

Every key has a default here; unknown keys are rejected. A config file is a
JSON object with any subset of these keys, and ``--set key=value`` overrides
are parsed as JSON when possible (so ``--set loss.lambda_var=10`` is a float
and ``--set arch.enc_channels=[8,16,16,32,32]`` a list).
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any

from .losses import LocalityWindow, LossWeights
from .model import ArchConfig

FAMILIES = ("dwmr", "ae", "bvae", "deepcubeai", "dwmr+ae", "dwmr+bvae")
VARIANTS = ("fully_differentiable", "straight_through", "two_step")
SCHEDULED = ("lr_enc", "lr_pred", "lr_dec", "tau", "lambda_var", "lambda_cor",
             "lambda_cos", "lambda_loc", "lambda_rec", "lambda_kl")
FACTOR_RANGE = (0.9, 1.1)


class ConfigError(ValueError):
    """Invalid key, value or combination; the CLI maps it to exit code 1."""


DEFAULTS: dict[str, Any] = {
    "benchmark": "puzzle",
    "family": "dwmr",
    "variant": "two_step",
    "seed": 0,
    # data
    "data.noisy": False,
    "data.noise_std": 0.5,
    "data.noise_mode": "std",
    "data.train_size": None,
    "data.val_size": None,
    "data.test_size": None,
    "data.split_seeds": [0, 1, 2],
    "data.digits_per_class": 200,
    "data.digit_seed": 0,
    "data.mnist_dir": None,
    # architecture
    "arch.n_bits": 64,
    "arch.enc_channels": [16, 32, 32, 64, 64],
    "arch.enc_hidden": 96,
    "arch.groups": 4,
    "arch.pred_hidden": 128,
    "arch.ice_hidden_channels": 32,
    "arch.ice_res_channels": 32,
    "arch.ice_res_blocks": 4,
    # optimization
    "train.epochs": None,
    "train.batch_size": 256,
    "train.lr_enc": 1e-3,
    "train.lr_pred": 1e-3,
    "train.lr_dec": 1e-3,
    "train.tau": 0.9,
    "train.two_step_b_input": "soft",
    "train.cos_triplets": None,
    "train.bvae_temperature": 1.0,
    "train.ema": True,
    "train.log_steps": False,
    "train.checkpoint_every": 1,
    # objective
    "loss.lambda_var": 25.0,
    "loss.lambda_cor": 5.0,
    "loss.lambda_cos": 5.0,
    "loss.lambda_loc": 1.0,
    "loss.lambda_rec": 0.0,
    "loss.lambda_kl": 0.0,
    "loss.gamma": 0.45,
    "loss.L": 1,
    "loss.U": 6,
    # probes
    "probe.epochs": 15,
    "probe.lr": 0.01,
    "probe.weight_decay": 0.001,
    "probe.batch_size": 256,
    # sweep
    "sweep.points": 24,
    "sweep.final_seeds": 10,
    "sweep.seed": 0,
    "sweep.epochs": None,
}
DEFAULTS.update({f"schedule.{name}": 1.0 for name in SCHEDULED})

_EPOCHS = {"puzzle": 40, "iceslider": 20}
_DWMR_TERMS = ("loss.lambda_var", "loss.lambda_cor", "loss.lambda_cos", "loss.lambda_loc")
# Baseline weights are our sweep centers; the tuned values are not published.
_FAMILY_WEIGHTS = {
    "dwmr": {"loss.lambda_rec": 0.0, "loss.lambda_kl": 0.0},
    "ae": {**{k: 0.0 for k in _DWMR_TERMS}, "loss.lambda_rec": 1.0, "loss.lambda_kl": 0.0},
    "bvae": {**{k: 0.0 for k in _DWMR_TERMS}, "loss.lambda_rec": 1.0, "loss.lambda_kl": 0.01},
    "deepcubeai": {**{k: 0.0 for k in _DWMR_TERMS}, "loss.lambda_rec": 1.0, "loss.lambda_kl": 0.0},
    "dwmr+ae": {"loss.lambda_rec": 1.0, "loss.lambda_kl": 0.0},
    "dwmr+bvae": {"loss.lambda_rec": 1.0, "loss.lambda_kl": 0.01},
}


def default_config(benchmark: str = "puzzle", family: str = "dwmr") -> dict[str, Any]:
    """Complete defaults for one (benchmark, family) pair."""
    if benchmark not in _EPOCHS:
        raise ConfigError(f"unknown benchmark {benchmark!r}; expected one of {sorted(_EPOCHS)}")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {list(FAMILIES)}")
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(benchmark=benchmark, family=family)
    cfg["train.epochs"] = _EPOCHS[benchmark]
    cfg["sweep.epochs"] = _EPOCHS[benchmark]
    if benchmark == "iceslider":
        cfg["arch.n_bits"] = 192
    cfg.update(_FAMILY_WEIGHTS[family])
    return cfg


CONFIG_DIR = Path(__file__).parent / "configs"


def config_path(benchmark: str, family: str) -> Path:
    """Shipped default file for one (benchmark, family) pair."""
    return CONFIG_DIR / f"{benchmark}_{family.replace('+', '_')}.json"


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_override(item: str) -> tuple[str, Any]:
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    return key.strip(), parse_value(value)


def resolve(base: dict[str, Any] | None = None, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Merge user keys onto the (benchmark, family) defaults and validate."""
    user = dict(base or {})
    user.update(overrides or {})
    unknown = sorted(set(user) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = default_config(user.get("benchmark", DEFAULTS["benchmark"]), user.get("family", DEFAULTS["family"]))
    cfg.update(user)
    validate(cfg)
    return cfg


def load_config(path: str | os.PathLike | None, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    base = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                base = json.load(fh)
            except ValueError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(base, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    return resolve(base, overrides)


def validate(cfg: dict[str, Any]) -> None:
    if cfg["variant"] not in VARIANTS:
        raise ConfigError(f"variant must be one of {list(VARIANTS)}, got {cfg['variant']!r}")
    if cfg["train.two_step_b_input"] not in ("soft", "straight_through"):
        raise ConfigError("train.two_step_b_input must be 'soft' or 'straight_through'")
    if not 0.0 < cfg["train.tau"] < 1.0:
        raise ConfigError(f"train.tau must lie in (0, 1), got {cfg['train.tau']}")
    if int(cfg["train.batch_size"]) < 2:
        raise ConfigError("train.batch_size must be at least 2")
    if int(cfg["train.epochs"]) < 1:
        raise ConfigError("train.epochs must be positive")
    for name in SCHEDULED:
        f = cfg[f"schedule.{name}"]
        if not FACTOR_RANGE[0] <= f <= FACTOR_RANGE[1]:
            raise ConfigError(f"schedule.{name}={f} outside {list(FACTOR_RANGE)}")
    for name in ("lr_enc", "lr_pred", "lr_dec"):
        if cfg[f"train.{name}"] <= 0:
            raise ConfigError(f"train.{name} must be positive")
    if not 0.0 <= cfg["loss.gamma"] <= 0.5:
        raise ConfigError("loss.gamma must lie in [0, 0.5]")
    if cfg["train.bvae_temperature"] <= 0:
        raise ConfigError("train.bvae_temperature must be positive")
    if cfg["data.noise_mode"] not in ("std", "variance"):
        raise ConfigError("data.noise_mode must be 'std' or 'variance'")
    try:
        weights(cfg)
        window(cfg).check(arch(cfg).n_bits)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if len(set(cfg["data.split_seeds"])) != 3:
        raise ConfigError("data.split_seeds needs three distinct seeds")


def weights(cfg: dict[str, Any]) -> LossWeights:
    return LossWeights(var=cfg["loss.lambda_var"], cor=cfg["loss.lambda_cor"], cos=cfg["loss.lambda_cos"],
                       loc=cfg["loss.lambda_loc"], rec=cfg["loss.lambda_rec"], kl=cfg["loss.lambda_kl"])


def window(cfg: dict[str, Any]) -> LocalityWindow:
    return LocalityWindow(int(cfg["loss.L"]), int(cfg["loss.U"]))


def arch(cfg: dict[str, Any]) -> ArchConfig:
    return ArchConfig(
        benchmark=cfg["benchmark"], n_bits=int(cfg["arch.n_bits"]),
        enc_channels=tuple(cfg["arch.enc_channels"]), enc_hidden=int(cfg["arch.enc_hidden"]),
        groups=int(cfg["arch.groups"]), pred_hidden=int(cfg["arch.pred_hidden"]),
        ice_hidden_channels=int(cfg["arch.ice_hidden_channels"]),
        ice_res_channels=int(cfg["arch.ice_res_channels"]), ice_res_blocks=int(cfg["arch.ice_res_blocks"]),
    )


def split_sizes(cfg: dict[str, Any]) -> dict[str, int] | None:
    from .datasets import SPLIT_SIZES

    sizes = dict(SPLIT_SIZES[cfg["benchmark"]])
    for split in sizes:
        if cfg[f"data.{split}_size"] is not None:
            sizes[split] = int(cfg[f"data.{split}_size"])
    return sizes


def dumps(cfg: dict[str, Any]) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
