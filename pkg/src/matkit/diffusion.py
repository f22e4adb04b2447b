"""Toy-scale latent diffusion: schedule, forward process, training, sampling.

The denoiser predicts the injected Gaussian noise (epsilon-prediction);
sampling runs the ancestral DDPM chain.  Latents come from the frozen
KL-autoencoder applied to albedo maps, standardized by a dataset-level
scale so the signal-to-noise schedule behaves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import engine as E
from .engine import AdamState, Rng, Tensor, adam_step, zero_grads
from .errors import DataError, ScheduleError
from .nets import UNet, UNetConfig


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule with cumulative-product alpha_bar."""
    if T < 2:
        raise ScheduleError(f"T must be >= 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def q_sample(z0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form forward marginal: sqrt(ab_t) z0 + sqrt(1 - ab_t) eps."""
    if np.shape(z0) != np.shape(eps):
        raise ValueError(f"z0/eps shapes differ: {np.shape(z0)} vs {np.shape(eps)}")
    t_arr = np.asarray(t, dtype=np.int64)
    if np.any(t_arr < 0) or np.any(t_arr >= sched.T):
        raise IndexError(f"timestep {t} outside [0, {sched.T})")
    ab = sched.alpha_bar[t_arr]
    if t_arr.ndim:  # per-batch timesteps broadcast over trailing dims
        ab = ab.reshape((-1,) + (1,) * (np.ndim(z0) - 1))
    z0 = np.asarray(z0)
    return (np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps).astype(z0.dtype)


def unet_forward(z_t: np.ndarray, t: int, label: int, model: UNet) -> np.ndarray:
    """Predicted noise for one latent (h, w, c) without gradients."""
    out = model.forward(Tensor(z_t[None].astype(np.float32)), t, label)
    return out.data[0]


def train_step(batch: dict, sched: NoiseSchedule, model: UNet, opt: AdamState,
               t_stream, noise_stream) -> float:
    """One epsilon-prediction MSE step over a batch {z0 (B,h,w,c), labels (B,)}."""
    z0 = batch["z0"]
    labels = batch["labels"]
    B = z0.shape[0]
    t = t_stream.randint(0, sched.T, (B,))
    eps = noise_stream.normal(z0.shape, dtype=np.float32)
    z_t = q_sample(z0.astype(np.float32), t, eps, sched)
    pred = model.forward(Tensor(z_t), t, labels)
    loss = E.mse(pred, Tensor(eps))
    zero_grads(model.ps.params)
    loss.backward()
    adam_step(model.ps.params, opt)
    return float(loss.data)


def sample(model: UNet, sched: NoiseSchedule, label: int, n: int, seed: int,
           latent_hw: int = 16) -> list[np.ndarray]:
    """Ancestral DDPM sampling of n latents for one class label."""
    if n == 0:
        return []
    stream = Rng(seed).stream("sample")
    c = model.cfg.in_channels
    z = stream.normal((n, latent_hw, latent_hw, c), dtype=np.float32)
    labels = np.full((n,), label, dtype=np.int64)
    for t in range(sched.T - 1, -1, -1):
        eps_hat = model.forward(Tensor(z), t, labels).data
        coef = sched.beta[t] / np.sqrt(1.0 - sched.alpha_bar[t])
        mean = (z - coef * eps_hat) / np.sqrt(sched.alpha[t])
        if t > 0:
            noise = stream.normal(z.shape, dtype=np.float32)
            z = (mean + np.sqrt(sched.beta[t]) * noise).astype(np.float32)
        else:
            z = mean.astype(np.float32)
    return [z[i] for i in range(n)]


def img2img_tileablize(x0_latent: np.ndarray, strength: float, model: UNet,
                       sched: NoiseSchedule, seed: int, label: int = 0) -> np.ndarray:
    """Noise a latent to t* = round(strength (T-1)) and denoise it back.

    Because the reverse chain runs through circular convolutions, the
    regenerated content is toroidally consistent; small strengths stay
    visually close to the input.
    """
    if not (0.0 < strength <= 1.0):
        raise ValueError(f"strength {strength} outside (0, 1]")
    stream = Rng(seed).stream("img2img")
    t_star = int(round(strength * (sched.T - 1)))
    z = x0_latent[None].astype(np.float32)
    eps = stream.normal(z.shape, dtype=np.float32)
    z = q_sample(z, t_star, eps, sched)
    labels = np.asarray([label], dtype=np.int64)
    for t in range(t_star, -1, -1):
        eps_hat = model.forward(Tensor(z), t, labels).data
        coef = sched.beta[t] / np.sqrt(1.0 - sched.alpha_bar[t])
        mean = (z - coef * eps_hat) / np.sqrt(sched.alpha[t])
        if t > 0:
            noise = stream.normal(z.shape, dtype=np.float32)
            z = (mean + np.sqrt(sched.beta[t]) * noise).astype(np.float32)
        else:
            z = mean.astype(np.float32)
    return z[0]


# -- full training loop --------------------------------------------------------------


@dataclass
class LdmTrainConfig:
    """Pinned external schema of the train-ldm config file."""

    image_size: int = 64
    T: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    base_channels: int = 32
    padding: str = "circular"
    lr: float = 2e-3
    steps: int = 5000
    seed: int = 0
    dataset_manifest: str = ""


BATCH_SIZE = 8  # desk default; deliberately not part of the config schema


def encode_dataset(manifest, encoder, split: str = "train"):
    """Inference-mode latent distributions for every record of a split."""
    from .materials import load_material

    records = manifest.split_records(split)
    if not records:
        raise DataError(f"manifest has no {split!r} records")
    mus, lvs, labels = [], [], []
    for rec in records:
        m = load_material(rec.directory)
        mu, lv = encoder.encode_arrays(m.albedo[None])
        mus.append(mu[0])
        lvs.append(lv[0])
        labels.append(manifest.label_of(rec))
    return np.stack(mus), np.stack(lvs), np.asarray(labels, dtype=np.int64)


def train_ldm(manifest, encoder, cfg: LdmTrainConfig, log=None):
    """Train the latent diffusion UNet on encoded albedo latents.

    Returns (model, schedule, info) where info carries the loss trace and
    the latent standardization scale.
    """
    rng = Rng(cfg.seed)
    sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    mus, lvs, labels = encode_dataset(manifest, encoder, "train")
    n = mus.shape[0]

    # dataset-level scale so latents enter the chain roughly unit-variance
    probe = mus + np.exp(0.5 * lvs) * rng.stream("scale-probe").normal(mus.shape)
    latent_scale = float(max(probe.std(), 1e-6))

    ucfg = UNetConfig(base_channels=cfg.base_channels, padding=cfg.padding,
                      label_vocab=len(manifest.category_vocabulary))
    model = UNet(ucfg, rng.stream("init"))
    opt = AdamState(model.ps.params, lr=cfg.lr)
    data_stream = rng.stream("data")
    t_stream = rng.stream("t")
    noise_stream = rng.stream("noise")
    reparam_stream = rng.stream("reparam")

    trace = []
    for step in range(cfg.steps):
        idx = data_stream.randint(0, n, (BATCH_SIZE,))
        z0 = mus[idx] + np.exp(0.5 * lvs[idx]) * reparam_stream.normal(mus[idx].shape)
        z0 = (z0 / latent_scale).astype(np.float32)
        loss = train_step({"z0": z0, "labels": labels[idx]}, sched, model, opt,
                          t_stream, noise_stream)
        trace.append(loss)
        if log and (step % 200 == 0 or step == cfg.steps - 1):
            log({"step": step, "loss": loss})
    info = {"loss_trace": trace, "latent_scale": latent_scale,
            "config": asdict(cfg), "unet_config": asdict(ucfg)}
    return model, sched, info
