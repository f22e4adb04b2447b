"""Latent-space autoencoder and its decoder heads.

Three decoder heads share the encoder's latent space: a plain albedo
reconstruction head (trained jointly with the encoder), an 8-channel
SVBRDF head trained with the rendering-aware loss against the frozen
encoder, and a highlight-removal albedo head trained on shaded/albedo
pairs.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
from PIL import Image

from . import engine as E
from .engine import AdamState, Rng, Tensor, adam_step, load_arrays, save_arrays, zero_grads
from .errors import DataError, NotTrained
from .losses import kl_divergence_t, log_l1_render_loss_t
from .materials import MaterialMaps, decode_normal, load_material
from .nets import AutoencoderConfig, DecoderHead, Encoder
from .render import render_views, sample_nine_views, setup_geometry

AE_BATCH = 4


# -- decoding helpers ----------------------------------------------------------


def split_pbr_tensors(out8: Tensor) -> dict:
    """Split a decoded (B,H,W,8) stack into differentiable map tensors.

    Normal channels are decoded from [0,1] via 2 enc - 1 and renormalized,
    so downstream rendering always sees unit normals.
    """
    albedo = out8[:, :, :, 0:3]
    n_raw = E.sub(E.mul(out8[:, :, :, 3:6], 2.0), 1.0)
    # keep z positive: sigmoid output can only reach z = -1 + 2 enc, so clamp
    nz = E.clamp(n_raw[:, :, :, 2:3], 1e-3, 1.0)
    n_vec = E.concat([n_raw[:, :, :, 0:2], nz], axis=3)
    norm = E.sqrt(E.sum_(E.mul(n_vec, n_vec), axis=3, keepdims=True))
    normal = E.div(n_vec, norm)
    return {
        "albedo": albedo,
        "normal": normal,
        "roughness": out8[:, :, :, 6:7],
        "metallic": out8[:, :, :, 7:8],
    }


def decode_albedo(head: DecoderHead, z: np.ndarray) -> np.ndarray:
    """Latent (h,w,4) -> albedo image (H,W,3) in [0,1]."""
    out = head.forward(Tensor(z[None].astype(np.float32)))
    return out.data[0]


def decode_pbr(head: DecoderHead, z: np.ndarray) -> MaterialMaps:
    """Latent (h,w,4) -> MaterialMaps (8-channel head)."""
    if head.kind != "pbr8":
        raise ValueError(f"decode_pbr needs a pbr8 head, got {head.kind}")
    out = head.forward(Tensor(z[None].astype(np.float32)))
    parts = split_pbr_tensors(out)
    return MaterialMaps(
        albedo=parts["albedo"].data[0],
        normal=parts["normal"].data[0],
        roughness=parts["roughness"].data[0],
        metallic=parts["metallic"].data[0],
    )


def dehighlight(encoder: Encoder, head: DecoderHead, img: np.ndarray) -> np.ndarray:
    """Strip specular highlights from an (H,W,3) image via the trained head."""
    if head.kind != "dehighlight3":
        raise NotTrained("dehighlight requires the trained dehighlight3 head")
    enc = encoder.encode(Tensor(img[None].astype(np.float32)))
    return head.forward(enc["z"]).data[0]


# -- dataset loading -------------------------------------------------------------


def load_split_stacks(manifest, split: str) -> tuple[np.ndarray, np.ndarray]:
    """(albedos (N,H,W,3), encoded 8-channel stacks (N,H,W,8)) for a split."""
    records = manifest.split_records(split)
    if not records:
        raise DataError(f"no records in split {split!r}")
    albedos, stacks = [], []
    for rec in records:
        m = load_material(rec.directory)
        albedos.append(m.albedo)
        stacks.append(m.encoded_stack())
    return np.stack(albedos), np.stack(stacks)


# -- autoencoder training -----------------------------------------------------------


def train_autoencoder(manifest, cfg: AutoencoderConfig, steps: int, seed: int,
                      lr: float = 2e-3, log=None):
    """Train encoder + albedo head with L1 + KL on train-split albedos.

    Returns (encoder, albedo_head, metrics).
    """
    rng = Rng(seed)
    encoder = Encoder(cfg, rng.stream("enc-init"))
    head = DecoderHead(cfg, "albedo3", rng.stream("dec-init"))
    params = {**encoder.ps.params, **head.ps.params}
    opt = AdamState(params, lr=lr)
    data_stream = rng.stream("data")
    noise_stream = rng.stream("reparam")

    train_albedo, _ = load_split_stacks(manifest, "train")
    n = train_albedo.shape[0]
    trace = []
    for step in range(steps):
        idx = data_stream.randint(0, n, (AE_BATCH,))
        x = Tensor(train_albedo[idx])
        enc = encoder.encode(x, noise=noise_stream.normal(
            (AE_BATCH, x.shape[1] // 4, x.shape[2] // 4, cfg.latent_channels),
            dtype=np.float32))
        recon = head.forward(enc["z"])
        l1 = E.mean(E.abs_(E.sub(recon, x)))
        kl = kl_divergence_t(enc["mu"], enc["log_var"])
        loss = E.add(l1, E.mul(kl, cfg.kl_weight))
        zero_grads(params)
        loss.backward()
        adam_step(params, opt)
        trace.append(float(l1.data))
        if log and (step % 100 == 0 or step == steps - 1):
            log({"step": step, "l1": float(l1.data), "kl": float(kl.data)})

    test_albedo, _ = load_split_stacks(manifest, "test")
    mu, _lv = encoder.encode_arrays(test_albedo)
    recon = head.forward(Tensor(mu)).data
    test_l1 = float(np.abs(recon - test_albedo).mean())
    metrics = {"train_l1_trace": trace, "test_l1": test_l1}
    return encoder, head, metrics


# -- rendering-aware PBR decoder training ----------------------------------------------


def _view_seed(base_seed: int, tag) -> int:
    from .engine.rng import _fnv1a64
    return _fnv1a64(f"{base_seed}/views/{tag}") & 0x7FFFFFFF


def _render_pred_ref(parts: dict, ref_maps: MaterialMaps, views_seed: int):
    views = sample_nine_views(views_seed)
    res = ref_maps.resolution
    geom = setup_geometry(views, res)
    pred = render_views(parts["albedo"], parts["normal"],
                        parts["roughness"], parts["metallic"], geom)
    ref = render_views(ref_maps.albedo, ref_maps.normal,
                       ref_maps.roughness, ref_maps.metallic, geom)
    return pred, Tensor(ref.data)


def train_pbr_decoder(manifest, encoder: Encoder, cfg: AutoencoderConfig,
                      weights: dict | None, steps: int, seed: int,
                      lr: float = 2e-3, batch: int = AE_BATCH, log=None):
    """Train the 8-channel SVBRDF head against the frozen encoder.

    Loss per sample: w_map L1(8ch) + w_render mean log-L1 over nine views
    (resampled per sample per step, shared between prediction and
    reference).  Returns (head, metrics-on-test-split).
    """
    w = {"w_map": 1.0, "w_kl": 0.0, "w_render": 1.0}
    if weights:
        w.update(weights)
    rng = Rng(seed)
    encoder.ps.freeze()
    head = DecoderHead(cfg, "pbr8", rng.stream("pbr-init"))
    opt = AdamState(head.ps.params, lr=lr)
    data_stream = rng.stream("data")
    noise_stream = rng.stream("reparam")

    train_albedo, train_stack = load_split_stacks(manifest, "train")
    records = manifest.split_records("train")
    n = train_albedo.shape[0]
    latent_hw = train_albedo.shape[1] // 4

    mus, lvs = [], []
    for i in range(0, n, 8):  # precompute frozen-encoder latents
        mu, lv = encoder.encode_arrays(train_albedo[i:i + 8])
        mus.append(mu)
        lvs.append(lv)
    mus, lvs = np.concatenate(mus), np.concatenate(lvs)

    trace = []
    for step in range(steps):
        idx = data_stream.randint(0, n, (batch,))
        noise = noise_stream.normal((batch, latent_hw, latent_hw, cfg.latent_channels),
                                    dtype=np.float32)
        z = (mus[idx] + np.exp(0.5 * lvs[idx]) * noise).astype(np.float32)
        out = head.forward(Tensor(z))
        ref_stack = Tensor(train_stack[idx])
        loss = E.mul(E.mean(E.abs_(E.sub(out, ref_stack))), w["w_map"])
        if w["w_render"]:
            parts = split_pbr_tensors(out)
            render_losses = []
            for b in range(batch):
                rec = records[int(idx[b])]
                ref_maps = MaterialMaps.from_encoded_stack(train_stack[idx[b]])
                sub_parts = {k: v[b:b + 1] for k, v in parts.items()}
                pred, ref = _render_pred_ref(sub_parts, ref_maps,
                                             _view_seed(seed, f"{step}/{rec.id}"))
                render_losses.append(log_l1_render_loss_t(pred, ref))
            render_term = render_losses[0]
            for rl in render_losses[1:]:
                render_term = E.add(render_term, rl)
            loss = E.add(loss, E.mul(render_term, w["w_render"] / batch))
        zero_grads(head.ps.params)
        loss.backward()
        adam_step(head.ps.params, opt)
        trace.append(float(loss.data))
        if log and (step % 100 == 0 or step == steps - 1):
            log({"step": step, "loss": float(loss.data)})

    metrics = evaluate_pbr_decoder(manifest, encoder, head, seed)
    metrics["loss_trace"] = trace
    return head, metrics


def evaluate_pbr_decoder(manifest, encoder: Encoder, head: DecoderHead, seed: int) -> dict:
    """Test-split map L1, per-map RMSE, and nine-view render log-L1.

    Views are derived from record ids only, so ablation runs with
    different training seeds still share evaluation views.
    """
    records = manifest.split_records("test")
    test_albedo, test_stack = load_split_stacks(manifest, "test")
    mu, _ = encoder.encode_arrays(test_albedo)
    out = head.forward(Tensor(mu)).data

    map_l1 = float(np.abs(out - test_stack).mean())
    rmse = {}
    slices = {"albedo": slice(0, 3), "normal": slice(3, 6),
              "roughness": slice(6, 7), "metallic": slice(7, 8)}
    for name, sl in slices.items():
        rmse[name] = float(np.sqrt(((out[..., sl] - test_stack[..., sl]) ** 2).mean()))

    render_vals = []
    for i, rec in enumerate(records):
        pred_maps = MaterialMaps.from_encoded_stack(out[i])
        ref_maps = MaterialMaps.from_encoded_stack(test_stack[i])
        geom = setup_geometry(sample_nine_views(_view_seed(0, rec.id)),
                              ref_maps.resolution)
        pred = render_views(pred_maps.albedo, pred_maps.normal, pred_maps.roughness,
                            pred_maps.metallic, geom)
        ref = render_views(ref_maps.albedo, ref_maps.normal, ref_maps.roughness,
                           ref_maps.metallic, geom)
        render_vals.append(float(log_l1_render_loss_t(pred, Tensor(ref.data)).data))
    render_mean = float(np.mean(render_vals))
    return {"map_l1": map_l1, "rmse": rmse, "render": render_mean,
            "total": map_l1 + render_mean}


# -- highlight-aware albedo decoder -----------------------------------------------------


def load_shaded_pairs(index_path) -> list[dict]:
    """Load the shaded-pair index written by render_shaded_dataset."""
    raw = json.loads(Path(index_path).read_text())
    pairs = raw["pairs"]
    if not pairs:
        raise DataError("shaded-pair index is empty")
    return pairs


def _read_img(path, gamma: float | None = None) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    if gamma:
        arr = np.power(arr, gamma)
    return arr


def train_dehighlight(pairs: list[dict], encoder: Encoder, cfg: AutoencoderConfig,
                      mix_ratio: float = 0.5, steps: int = 400, seed: int = 0,
                      lr: float = 2e-3, batch: int = AE_BATCH, log=None,
                      albedo_head: DecoderHead | None = None):
    """Train the highlight-removal head on shaded -> albedo pairs.

    mix_ratio is the fraction of pure-albedo inputs per batch (the rest
    are shaded renders); targets are always the reference albedo.
    Returns (head, metrics) with highlight / non-highlight L1 and PSNR on
    the held-out (test-split) pairs, plus identity and plain-decoder
    baselines.
    """
    if not pairs:
        raise DataError("no shaded pairs")
    rng = Rng(seed)
    encoder.ps.freeze()
    head = DecoderHead(cfg, "dehighlight3", rng.stream("hl-init"))
    opt = AdamState(head.ps.params, lr=lr)
    data_stream = rng.stream("data")
    mix_stream = rng.stream("mix")
    noise_stream = rng.stream("reparam")

    train_pairs = [p for p in pairs if p.get("split", "train") == "train"]
    test_pairs = [p for p in pairs if p.get("split", "train") == "test"]
    if not train_pairs or not test_pairs:
        raise DataError("shaded pairs must cover both train and test splits")

    shaded = np.stack([_read_img(p["shaded"], gamma=2.2) for p in train_pairs])
    albedo = np.stack([_read_img(p["albedo"]) for p in train_pairs])
    n = shaded.shape[0]
    latent_hw = shaded.shape[1] // 4

    trace = []
    for step in range(steps):
        idx = data_stream.randint(0, n, (batch,))
        use_albedo = mix_stream.uniform((batch,)) < mix_ratio
        x = np.where(use_albedo[:, None, None, None], albedo[idx], shaded[idx])
        noise = noise_stream.normal((batch, latent_hw, latent_hw, cfg.latent_channels),
                                    dtype=np.float32)
        enc = encoder.encode(Tensor(x.astype(np.float32)), noise=noise)
        out = head.forward(enc["z"])
        loss = E.mean(E.abs_(E.sub(out, Tensor(albedo[idx]))))
        zero_grads(head.ps.params)
        loss.backward()
        adam_step(head.ps.params, opt)
        trace.append(float(loss.data))
        if log and (step % 100 == 0 or step == steps - 1):
            log({"step": step, "l1": float(loss.data)})

    metrics = evaluate_dehighlight(test_pairs, encoder, head, albedo_head)
    metrics["loss_trace"] = trace
    return head, metrics


def _batched_decode(encoder, head, images: np.ndarray) -> np.ndarray:
    outs = []
    for i in range(0, images.shape[0], 8):
        enc = encoder.encode(Tensor(images[i:i + 8].astype(np.float32)))
        outs.append(head.forward(enc["z"]).data)
    return np.concatenate(outs)


def evaluate_dehighlight(test_pairs: list[dict], encoder: Encoder, head: DecoderHead,
                         albedo_head: DecoderHead | None = None) -> dict:
    """Highlight vs non-highlight L1/PSNR, identity and plain-decoder baselines."""
    shaded = np.stack([_read_img(p["shaded"], gamma=2.2) for p in test_pairs])
    albedo = np.stack([_read_img(p["albedo"]) for p in test_pairs])

    def l1(a, b):
        return float(np.abs(a - b).mean())

    def psnr(a, b):
        m = float(((a - b) ** 2).mean())
        return float(10.0 * np.log10(1.0 / max(m, 1e-12)))

    out_hl = _batched_decode(encoder, head, shaded)
    out_plain = _batched_decode(encoder, head, albedo)
    metrics = {
        "l1_highlight": l1(out_hl, albedo),
        "psnr_highlight": psnr(out_hl, albedo),
        "l1_nonhighlight": l1(out_plain, albedo),
        "psnr_nonhighlight": psnr(out_plain, albedo),
        "identity_l1_highlight": l1(shaded, albedo),
    }
    if albedo_head is not None:
        base = _batched_decode(encoder, albedo_head, albedo)
        metrics["plain_decoder_l1"] = l1(base, albedo)
    return metrics


# -- checkpoint plumbing -------------------------------------------------------------


def save_autoencoder(path, encoder: Encoder, heads: dict, extra_meta: dict | None = None):
    """One container holding the encoder plus any decoder heads."""
    arrays = dict(encoder.ps.arrays())
    kinds = {}
    for kind, head in heads.items():
        arrays.update(head.ps.arrays())
        kinds[kind] = True
    meta = {"ae_config": asdict(encoder.cfg), "heads": kinds}
    meta.update(extra_meta or {})
    save_arrays(path, arrays, meta)


def load_autoencoder(path):
    """Returns (encoder, {kind: head}, meta)."""
    arrays, meta = load_arrays(path)
    cfg = AutoencoderConfig(**meta["ae_config"])
    rng = Rng(0)
    encoder = Encoder(cfg, rng.stream("enc-init"))
    enc_arrays = {k: v for k, v in arrays.items() if k.startswith("enc.")}
    encoder.ps.load_arrays(enc_arrays)
    heads = {}
    for kind in meta.get("heads", {}):
        head = DecoderHead(cfg, kind, rng.stream("dec-init"))
        head.ps.load_arrays({k: v for k, v in arrays.items() if k.startswith(f"{kind}.")})
        heads[kind] = head
    return encoder, heads, meta
