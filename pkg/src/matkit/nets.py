"""Network building blocks on the autodiff engine.

Everything is NHWC with stride-1 convolutions; spatial resizing happens
only through avg_pool2 / nearest_upsample2 so circular padding keeps the
whole stack toroidally consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine as E
from .engine import Stream, Tensor
from .errors import ShapeError


class ParamSet:
    """Flat registry of named trainable tensors."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(array, dtype=np.float32))
        t.requires_grad = True
        self.params[name] = t
        return t

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
        for k, p in self.params.items():
            arr = np.asarray(arrays[k], dtype=np.float32)
            if arr.shape != p.data.shape:
                raise ShapeError(f"parameter {k}: {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    def freeze(self) -> None:
        for p in self.params.values():
            p.requires_grad = False


class Conv2d:
    def __init__(self, ps: ParamSet, name: str, k: int, cin: int, cout: int,
                 stream: Stream, pad: str = "circular", zero_init: bool = False):
        scale = 0.0 if zero_init else math.sqrt(2.0 / (k * k * cin))
        self.w = ps.add(f"{name}.w", stream.normal((k, k, cin, cout)) * scale)
        self.b = ps.add(f"{name}.b", np.zeros(cout))
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        if self.pad == "circular":
            return E.conv2d_circular(x, self.w, self.b)
        return E.conv2d_zero(x, self.w, self.b)


class Dense:
    def __init__(self, ps: ParamSet, name: str, cin: int, cout: int, stream: Stream,
                 zero_init: bool = False):
        scale = 0.0 if zero_init else math.sqrt(1.0 / cin)
        self.w = ps.add(f"{name}.w", stream.normal((cin, cout)) * scale)
        self.b = ps.add(f"{name}.b", np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return E.dense(x, self.w, self.b)


class GroupNorm:
    def __init__(self, ps: ParamSet, name: str, channels: int, groups: int = 4):
        self.gamma = ps.add(f"{name}.g", np.ones(channels))
        self.beta = ps.add(f"{name}.b", np.zeros(channels))
        self.groups = groups

    def __call__(self, x: Tensor) -> Tensor:
        return E.group_norm(x, self.gamma, self.beta, groups=self.groups)


class ResBlock:
    """GN-silu-conv twice with additive (time+label) embedding injection."""

    def __init__(self, ps: ParamSet, name: str, cin: int, cout: int, stream: Stream,
                 pad: str, emb_dim: int | None = None):
        self.gn1 = GroupNorm(ps, f"{name}.gn1", cin)
        self.conv1 = Conv2d(ps, f"{name}.conv1", 3, cin, cout, stream, pad)
        self.emb = Dense(ps, f"{name}.emb", emb_dim, cout, stream) if emb_dim else None
        self.gn2 = GroupNorm(ps, f"{name}.gn2", cout)
        self.conv2 = Conv2d(ps, f"{name}.conv2", 3, cout, cout, stream, pad)
        self.skip = Conv2d(ps, f"{name}.skip", 1, cin, cout, stream, pad) if cin != cout else None

    def __call__(self, x: Tensor, emb: Tensor | None = None) -> Tensor:
        h = self.conv1(E.silu(self.gn1(x)))
        if self.emb is not None and emb is not None:
            proj = self.emb(E.silu(emb))
            h = E.add(h, E.reshape(proj, (proj.shape[0], 1, 1, proj.shape[1])))
        h = self.conv2(E.silu(self.gn2(h)))
        base = self.skip(x) if self.skip is not None else x
        return E.add(base, h)


def timestep_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(np.float32)


# -- variational encoder -------------------------------------------------------


@dataclass
class AutoencoderConfig:
    """Latent geometry and width of the KL autoencoder (always circular)."""

    base_channels: int = 32
    latent_channels: int = 4
    downsample: int = 4  # two avg_pool2 stages
    kl_weight: float = 1e-6
    groups: int = 4


class Encoder:
    """Image (B,H,W,3) -> latent distribution (mu, log_var), each (B,H/4,W/4,4)."""

    def __init__(self, cfg: AutoencoderConfig, stream: Stream):
        self.cfg = cfg
        ps = ParamSet()
        b = cfg.base_channels
        pad = "circular"
        self.stem = Conv2d(ps, "enc.stem", 3, 3, b, stream, pad)
        self.b1 = ResBlock(ps, "enc.b1", b, b, stream, pad)
        self.b2 = ResBlock(ps, "enc.b2", b, 2 * b, stream, pad)
        self.b3 = ResBlock(ps, "enc.b3", 2 * b, 2 * b, stream, pad)
        self.gn = GroupNorm(ps, "enc.gn", 2 * b)
        self.out = Conv2d(ps, "enc.out", 3, 2 * b, 2 * cfg.latent_channels, stream, pad)
        self.ps = ps

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.ndim != 4 or x.shape[3] != 3:
            raise ShapeError(f"encoder expects (B,H,W,3), got {x.shape}")
        if x.shape[1] % self.cfg.downsample or x.shape[2] % self.cfg.downsample:
            raise ShapeError(f"spatial dims {x.shape[1:3]} not divisible by {self.cfg.downsample}")
        h = self.stem(x)
        h = self.b1(h)
        h = E.avg_pool2(h)
        h = self.b2(h)
        h = E.avg_pool2(h)
        h = self.b3(h)
        h = self.out(E.silu(self.gn(h)))
        c = self.cfg.latent_channels
        mu = h[:, :, :, :c]
        log_var = E.clamp(h[:, :, :, c:], -10.0, 10.0)
        return mu, log_var

    def encode(self, x: Tensor, noise: np.ndarray | None = None) -> dict:
        """Training mode samples z = mu + exp(log_var/2) * noise; inference returns mu."""
        mu, log_var = self.forward(x)
        if noise is None:
            z = mu
        else:
            z = E.add(mu, E.mul(E.exp(E.mul(log_var, 0.5)), Tensor(noise.astype(np.float32))))
        return {"mu": mu, "log_var": log_var, "z": z}

    def encode_arrays(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inference-mode (mu, log_var) for a stack of images, no gradients."""
        mu, log_var = self.forward(Tensor(images.astype(np.float32)))
        return mu.data, log_var.data


class DecoderHead:
    """Latent (B,h,w,4) -> sigmoid maps (B,4h,4w,out_channels)."""

    KINDS = {"albedo3": 3, "pbr8": 8, "dehighlight3": 3}

    def __init__(self, cfg: AutoencoderConfig, kind: str, stream: Stream):
        if kind not in self.KINDS:
            raise ValueError(f"unknown head kind {kind!r}")
        self.cfg = cfg
        self.kind = kind
        self.out_channels = self.KINDS[kind]
        b = cfg.base_channels
        pad = "circular"
        ps = ParamSet()
        self.stem = Conv2d(ps, f"{kind}.stem", 3, cfg.latent_channels, 2 * b, stream, pad)
        self.b1 = ResBlock(ps, f"{kind}.b1", 2 * b, 2 * b, stream, pad)
        self.b2 = ResBlock(ps, f"{kind}.b2", 2 * b, b, stream, pad)
        self.b3 = ResBlock(ps, f"{kind}.b3", b, b, stream, pad)
        self.gn = GroupNorm(ps, f"{kind}.gn", b)
        self.out = Conv2d(ps, f"{kind}.out", 3, b, self.out_channels, stream, pad)
        self.ps = ps

    def forward(self, z: Tensor) -> Tensor:
        h = self.stem(z)
        h = self.b1(h)
        h = E.nearest_upsample2(h)
        h = self.b2(h)
        h = E.nearest_upsample2(h)
        h = self.b3(h)
        return E.sigmoid(self.out(E.silu(self.gn(h))))


# -- conditional denoising UNet ---------------------------------------------------


@dataclass
class UNetConfig:
    in_channels: int = 4
    base_channels: int = 32
    channel_mults: tuple = (1, 2)
    num_res_blocks: int = 2
    time_embed_dim: int = 128
    label_vocab: int = 5
    padding: str = "circular"  # or "zero"
    zero_init_out: bool = True
    groups: int = 4


class UNet:
    """epsilon-prediction UNet conditioned on timestep and class label."""

    def __init__(self, cfg: UNetConfig, stream: Stream):
        if cfg.padding not in ("circular", "zero"):
            raise ValueError(f"padding must be circular or zero, got {cfg.padding!r}")
        self.cfg = cfg
        ps = ParamSet()
        pad = cfg.padding
        d = cfg.time_embed_dim
        self.t1 = Dense(ps, "unet.temb1", d, d, stream)
        self.t2 = Dense(ps, "unet.temb2", d, d, stream)
        self.label_table = ps.add("unet.label", stream.normal((cfg.label_vocab, d)) * 0.02)

        chans = [cfg.base_channels * m for m in cfg.channel_mults]
        levels = len(chans)
        self.levels = levels
        self.stem = Conv2d(ps, "unet.stem", 3, cfg.in_channels, chans[0], stream, pad)

        self.down: list[list[ResBlock]] = []
        prev = chans[0]
        for lv, ch in enumerate(chans):
            blocks = []
            for r in range(cfg.num_res_blocks):
                blocks.append(ResBlock(ps, f"unet.down{lv}.rb{r}", prev, ch, stream, pad, d))
                prev = ch
            self.down.append(blocks)

        self.mid = ResBlock(ps, "unet.mid", prev, prev, stream, pad, d)

        self.up: list[list[ResBlock]] = []
        for lv in reversed(range(levels)):
            ch = chans[lv]
            blocks = []
            cin = prev + ch  # skip concat
            for r in range(cfg.num_res_blocks):
                blocks.append(ResBlock(ps, f"unet.up{lv}.rb{r}", cin, ch, stream, pad, d))
                cin = ch
            prev = ch
            self.up.append(blocks)

        self.out_gn = GroupNorm(ps, "unet.ogn", prev)
        self.out = Conv2d(ps, "unet.out", 3, prev, cfg.in_channels, stream, pad,
                          zero_init=cfg.zero_init_out)
        self.ps = ps

    def forward(self, z: Tensor, t, labels) -> Tensor:
        cfg = self.cfg
        if z.ndim != 4 or z.shape[3] != cfg.in_channels:
            raise ShapeError(f"unet expects (B,h,w,{cfg.in_channels}), got {z.shape}")
        if z.shape[1] % (2 ** (self.levels - 1)) or z.shape[2] % (2 ** (self.levels - 1)):
            raise ShapeError(f"spatial {z.shape[1:3]} not divisible by 2^{self.levels - 1}")
        B = z.shape[0]
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.int64), (B,))
        lab_arr = np.broadcast_to(np.asarray(labels, dtype=np.int64), (B,))
        emb = Tensor(timestep_embedding(t_arr, cfg.time_embed_dim))
        emb = self.t2(E.silu(self.t1(emb)))
        emb = E.add(emb, E.take_rows(self.label_table, lab_arr))

        h = self.stem(z)
        skips = []
        for lv, blocks in enumerate(self.down):
            for rb in blocks:
                h = rb(h, emb)
            skips.append(h)
            if lv < self.levels - 1:
                h = E.avg_pool2(h)
        h = self.mid(h, emb)
        for idx, blocks in enumerate(self.up):
            lv = self.levels - 1 - idx
            h = E.concat([h, skips[lv]], axis=3)
            for rb in blocks:
                h = rb(h, emb)
            if lv > 0:
                h = E.nearest_upsample2(h)
        return self.out(E.silu(self.out_gn(h)))
