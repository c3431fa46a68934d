"""Encoder, EMA target encoder, predictor and decoder for both benchmarks."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import ndcore as nd
from .ndcore import Module, Tensor

N_ACTIONS = 4
ICE_GRID = (3, 8, 8)


@dataclass
class ArchConfig:
    """Layer sizes. Puzzle conv widths and the decoder layout are our own choices."""

    benchmark: str = "puzzle"
    n_bits: int = 64
    enc_channels: tuple[int, ...] = (16, 32, 32, 64, 64)
    enc_hidden: int = 96
    groups: int = 4
    pred_hidden: int = 128
    ice_hidden_channels: int = 32
    ice_res_channels: int = 32
    ice_res_blocks: int = 4

    def __post_init__(self):
        self.enc_channels = tuple(self.enc_channels)
        if self.benchmark == "iceslider":
            self.n_bits = int(np.prod(ICE_GRID))
        elif self.benchmark != "puzzle":
            raise ValueError(f"unknown benchmark {self.benchmark!r}")


# ------------------------------------------------------------------ encoders
class PuzzleEncoder(Module):
    """Five 3x3 conv + GroupNorm + ReLU stages, 2x2 average pooling after the
    first three, then a two-layer MLP to ``n_bits`` logits."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float32):
        layers: list[Module] = []
        c_in = 1
        for i, c in enumerate(cfg.enc_channels):
            layers += [nd.Conv2d(c_in, c, 3, rng, padding=1, dtype=dtype),
                       nd.GroupNorm(min(cfg.groups, c), c, dtype=dtype), nd.ReLU()]
            if i < 3:
                layers.append(nd.AvgPool2d(2))
            c_in = c
        side = 88 // 8
        self.features = nd.Sequential(*layers, nd.Flatten())
        self.head = nd.Sequential(
            nd.Linear(c_in * side * side, cfg.enc_hidden, rng, dtype=dtype), nd.ReLU(),
            nd.Linear(cfg.enc_hidden, cfg.n_bits, rng, dtype=dtype),
        )

    def logits(self, x: Tensor) -> Tensor:
        return self.head(self.features(x))

    def forward(self, x: Tensor) -> Tensor:
        return nd.sigmoid(self.logits(x))


class IceEncoder(Module):
    """conv k4 s4 (ReLU) then conv k2 s2 to a 3x8x8 grid of bit logits."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float32):
        self.conv1 = nd.Conv2d(3, cfg.ice_hidden_channels, 4, rng, stride=4, dtype=dtype)
        self.conv2 = nd.Conv2d(cfg.ice_hidden_channels, ICE_GRID[0], 2, rng, stride=2, dtype=dtype)

    def logits(self, x: Tensor) -> Tensor:
        h = self.conv2(nd.relu(self.conv1(x)))
        return h.reshape(h.shape[0], -1)

    def forward(self, x: Tensor) -> Tensor:
        return nd.sigmoid(self.logits(x))


# ---------------------------------------------------------------- predictors
class MLPPredictor(Module):
    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float32):
        k, h = cfg.n_bits, cfg.pred_hidden
        self.net = nd.Sequential(
            nd.Linear(k + N_ACTIONS, h, rng, dtype=dtype), nd.ReLU(),
            nd.Linear(h, h, rng, dtype=dtype), nd.ReLU(),
            nd.Linear(h, k, rng, dtype=dtype),
        )

    def forward(self, latent: Tensor, action: Tensor) -> Tensor:
        return nd.sigmoid(self.net(nd.concat([latent, action], axis=1)))


class ResidualPredictor(Module):
    """Latent grid with the one-hot action broadcast as 4 extra channels,
    a 3x3 stem, residual blocks, and a 1x1 sigmoid head."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float32):
        c = cfg.ice_res_channels
        self.stem = nd.Conv2d(ICE_GRID[0] + N_ACTIONS, c, 3, rng, padding=1, dtype=dtype)
        self.stem_bn = nd.BatchNorm2d(c, dtype=dtype)
        self.blocks = [nd.ResidualBlock(c, rng, dtype=dtype) for _ in range(cfg.ice_res_blocks)]
        self.head = nd.Conv2d(c, ICE_GRID[0], 1, rng, dtype=dtype)

    def forward(self, latent: Tensor, action: Tensor) -> Tensor:
        n = latent.shape[0]
        grid = latent.reshape((n,) + ICE_GRID)
        planes = nd.broadcast_to(action.reshape(n, N_ACTIONS, 1, 1), (n, N_ACTIONS) + ICE_GRID[1:])
        h = nd.relu(self.stem_bn(self.stem(nd.concat([grid, planes], axis=1))))
        for block in self.blocks:
            h = block(h)
        return nd.sigmoid(self.head(h)).reshape(n, -1)


# ------------------------------------------------------------------ decoders
class PuzzleDecoder(Module):
    """Mirror of the puzzle encoder: MLP to an 11x11 grid, two 3x3 convs, three
    stride-2 transposed convs back to 88x88, and a 3x3 sigmoid output conv."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float32):
        c = cfg.enc_channels
        side = 88 // 8
        g = cfg.groups

        def block(*mods):
            return list(mods) + [nd.ReLU()]

        layers = [
            nd.Linear(cfg.n_bits, cfg.enc_hidden, rng, dtype=dtype), nd.ReLU(),
            nd.Linear(cfg.enc_hidden, c[4] * side * side, rng, dtype=dtype), nd.ReLU(),
            nd.Unflatten((c[4], side, side)),
        ]
        layers += block(nd.Conv2d(c[4], c[3], 3, rng, padding=1, dtype=dtype), nd.GroupNorm(min(g, c[3]), c[3], dtype=dtype))
        layers += block(nd.Conv2d(c[3], c[2], 3, rng, padding=1, dtype=dtype), nd.GroupNorm(min(g, c[2]), c[2], dtype=dtype))
        layers += block(nd.ConvTranspose2d(c[2], c[1], 2, rng, stride=2, dtype=dtype), nd.GroupNorm(min(g, c[1]), c[1], dtype=dtype))
        layers += block(nd.ConvTranspose2d(c[1], c[0], 2, rng, stride=2, dtype=dtype), nd.GroupNorm(min(g, c[0]), c[0], dtype=dtype))
        layers += block(nd.ConvTranspose2d(c[0], c[0], 2, rng, stride=2, dtype=dtype), nd.GroupNorm(min(g, c[0]), c[0], dtype=dtype))
        layers += [nd.Conv2d(c[0], 1, 3, rng, padding=1, dtype=dtype), nd.Sigmoid()]
        self.net = nd.Sequential(*layers)

    def forward(self, p: Tensor) -> Tensor:
        return self.net(p)


class IceDecoder(Module):
    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float32):
        self.up1 = nd.ConvTranspose2d(ICE_GRID[0], cfg.ice_hidden_channels, 2, rng, stride=2, dtype=dtype)
        self.up2 = nd.ConvTranspose2d(cfg.ice_hidden_channels, 3, 4, rng, stride=4, dtype=dtype)

    def forward(self, p: Tensor) -> Tensor:
        h = p.reshape((p.shape[0],) + ICE_GRID)
        return nd.sigmoid(self.up2(nd.relu(self.up1(h))))


# ------------------------------------------------------------------- helpers
def binarize(p) -> np.ndarray:
    """Hard bits, 1 where p >= 0.5 (a tie maps to 1)."""
    arr = p.data if isinstance(p, Tensor) else np.asarray(p)
    return (arr >= 0.5).astype(arr.dtype if arr.dtype.kind == "f" else np.float64)


def one_hot_actions(actions, dtype=np.float32) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.int64)
    out = np.zeros((len(actions), N_ACTIONS), dtype=dtype)
    out[np.arange(len(actions)), actions] = 1.0
    return out


def observations_to_input(obs: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(N, H, W, C) u8 or [0, 1] floats -> (N, C, H, W) floats in [0, 1]."""
    obs = np.asarray(obs)
    if obs.dtype == np.uint8:
        x = obs.astype(dtype) * dtype(1.0 / 255.0)
    else:
        x = obs.astype(dtype)
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def ema_update(target: Module, online: Module, tau: float) -> None:
    """target <- tau * target + (1 - tau) * online, parameters and buffers alike."""
    src = online.state_dict()
    for name, arr in target.state_dict().items():
        arr *= tau
        arr += (1.0 - tau) * src[name]


def _freeze(module: Module) -> Module:
    for p in module.parameters():
        p.requires_grad = False
        p.grad = None
    return module


@dataclass
class WorldModel:
    """Online encoder, EMA target encoder, predictor and optional decoder."""

    arch: ArchConfig
    encoder: Module
    target_encoder: Module
    predictor: Module
    decoder: Module | None = None
    dtype: type = np.float32
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, arch: ArchConfig, seed: int = 0, with_decoder: bool = False,
              dtype=np.float32) -> "WorldModel":
        rng = np.random.default_rng(seed)
        if arch.benchmark == "puzzle":
            enc = PuzzleEncoder(arch, rng, dtype)
            pred = MLPPredictor(arch, rng, dtype)
            dec = PuzzleDecoder(arch, rng, dtype) if with_decoder else None
        else:
            enc = IceEncoder(arch, rng, dtype)
            pred = ResidualPredictor(arch, rng, dtype)
            dec = IceDecoder(arch, rng, dtype) if with_decoder else None
        target = _freeze(copy.deepcopy(enc))
        return cls(arch, enc, target, pred, dec, dtype)

    @property
    def n_bits(self) -> int:
        return self.arch.n_bits

    def input(self, obs) -> Tensor:
        return Tensor(observations_to_input(obs, self.dtype))

    def encode(self, obs, target: bool = False) -> Tensor:
        """Bit probabilities for a batch; target-encoder outputs carry no graph."""
        x = obs if isinstance(obs, Tensor) else self.input(obs)
        if target:
            with nd.no_grad():
                return self.target_encoder(x)
        return self.encoder(x)

    def encode_logits(self, obs) -> Tensor:
        x = obs if isinstance(obs, Tensor) else self.input(obs)
        return self.encoder.logits(x)

    def predict(self, latent, actions) -> Tensor:
        latent = latent if isinstance(latent, Tensor) else Tensor(np.asarray(latent, dtype=self.dtype))
        act = Tensor(one_hot_actions(actions, self.dtype))
        if latent.ndim != 2 or latent.shape[1] != self.n_bits:
            raise nd.ShapeError(f"predict: latent must be (N, {self.n_bits}), got {latent.shape}")
        if act.shape[0] != latent.shape[0]:
            raise nd.ShapeError(f"predict: {latent.shape[0]} latents vs {act.shape[0]} actions")
        return self.predictor(latent, act)

    def decode(self, p) -> Tensor:
        if self.decoder is None:
            raise RuntimeError("this world model has no decoder")
        p = p if isinstance(p, Tensor) else Tensor(np.asarray(p, dtype=self.dtype))
        if p.ndim != 2 or p.shape[1] != self.n_bits:
            raise nd.ShapeError(f"decode: latent must be (N, {self.n_bits}), got {p.shape}")
        return self.decoder(p)

    def ema_update(self, tau: float) -> None:
        ema_update(self.target_encoder, self.encoder, tau)

    def modules(self) -> dict[str, Module]:
        mods = {"enc": self.encoder, "enc_ema": self.target_encoder, "pred": self.predictor}
        if self.decoder is not None:
            mods["dec"] = self.decoder
        return mods

    def train(self, mode: bool = True) -> "WorldModel":
        for m in self.modules().values():
            m.train(mode)
        return self

    def eval(self) -> "WorldModel":
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, mod in self.modules().items():
            for name, arr in mod.state_dict().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for prefix, mod in self.modules().items():
            sub = {k[len(prefix) + 1:]: v for k, v in state.items() if k.startswith(prefix + ".")}
            mod.load_state_dict(sub)
