"""Batch command-line interface.

One subcommand per pipeline stage; every run writes artifacts under
--out plus a run.json recording the resolved config, seed, versions, and
headline metrics, so any run can be reproduced bit-for-bit by repeating
its argv.  Logs go to stderr as JSON lines.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MatkitError


def log_jsonl(record: dict) -> None:
    sys.stderr.write(json.dumps(record) + "\n")
    sys.stderr.flush()


def _write_run_json(out: Path, subcommand: str, argv: list[str], config: dict,
                    seed: int | None, metrics: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "subcommand": subcommand,
        "argv": argv,
        "config": config,
        "seed": seed,
        "versions": {"matkit": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "metrics": metrics,
    }
    (out / "run.json").write_text(json.dumps(payload, indent=1))


def _load_config(path: str | None, defaults, overrides: list[str]):
    """Build a dataclass config from JSON file + key=value overrides.

    Unknown keys are rejected.
    """
    values = dataclasses.asdict(defaults)
    if path:
        raw = json.loads(Path(path).read_text())
        for k, v in raw.items():
            if k not in values:
                raise SystemExit(f"unknown config key {k!r} (valid: {sorted(values)})")
            values[k] = v
    for item in overrides or []:
        if "=" not in item:
            raise SystemExit(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        if k not in values:
            raise SystemExit(f"unknown override key {k!r} (valid: {sorted(values)})")
        current = values[k]
        if isinstance(current, bool):
            values[k] = v.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            values[k] = int(v)
        elif isinstance(current, float):
            values[k] = float(v)
        else:
            values[k] = v
    return type(defaults)(**values)


# -- subcommand implementations ---------------------------------------------------


def cmd_dataset_gen(args, argv) -> int:
    from .dataset import build_dataset

    out = Path(args.out)
    manifest = build_dataset(args.per_class, args.res, args.seed, out)
    counts = {}
    for r in manifest.records:
        counts[r.category] = counts.get(r.category, 0) + 1
    metrics = {"records": len(manifest.records), "per_class": counts,
               "train": len(manifest.split_records("train")),
               "test": len(manifest.split_records("test"))}
    _write_run_json(out, "dataset-gen", argv,
                    {"classes": args.classes, "per_class": args.per_class,
                     "res": args.res}, args.seed, metrics)
    log_jsonl({"event": "dataset-gen", **metrics})
    return 0


def cmd_train_ae(args, argv) -> int:
    from .dataset import DatasetManifest
    from .decoder import save_autoencoder, train_autoencoder
    from .nets import AutoencoderConfig

    manifest = DatasetManifest.load(args.manifest)
    cfg = AutoencoderConfig(base_channels=args.base_channels, kl_weight=args.kl_weight)
    encoder, head, metrics = train_autoencoder(
        manifest, cfg, steps=args.steps, seed=args.seed, lr=args.lr, log=log_jsonl)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_autoencoder(out / "ae.ckpt", encoder, {"albedo3": head},
                     {"seed": args.seed, "manifest": str(args.manifest)})
    summary = {"test_l1": metrics["test_l1"], "final_train_l1": metrics["train_l1_trace"][-1]}
    _write_run_json(out, "train-ae", argv,
                    {"steps": args.steps, "lr": args.lr,
                     "base_channels": args.base_channels, "kl_weight": args.kl_weight,
                     "manifest": str(args.manifest)}, args.seed, summary)
    log_jsonl({"event": "train-ae", **summary})
    return 0


def cmd_train_ldm(args, argv) -> int:
    from .dataset import DatasetManifest
    from .decoder import load_autoencoder
    from .diffusion import LdmTrainConfig, train_ldm
    from .engine import save_arrays

    defaults = LdmTrainConfig(seed=args.seed if args.seed is not None else 0,
                              dataset_manifest=args.manifest or "")
    cfg = _load_config(args.config, defaults, args.set)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.manifest:
        cfg = dataclasses.replace(cfg, dataset_manifest=args.manifest)
    if not cfg.dataset_manifest:
        raise SystemExit("train-ldm needs a dataset manifest (--manifest or config)")

    manifest = DatasetManifest.load(cfg.dataset_manifest)
    encoder, _heads, _meta = load_autoencoder(args.ae)
    model, sched, info = train_ldm(manifest, encoder, cfg, log=log_jsonl)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_arrays(out / "ldm.ckpt", model.ps.arrays(), {
        "unet_config": info["unet_config"],
        "schedule": {"T": cfg.T, "beta_start": cfg.beta_start, "beta_end": cfg.beta_end},
        "latent_scale": info["latent_scale"],
        "image_size": cfg.image_size,
        "ae": str(args.ae),
    })
    trace = info["loss_trace"]
    metrics = {"loss_first": trace[0], "loss_last": trace[-1],
               "loss_mean_tail": float(np.mean(trace[-100:]))}
    _write_run_json(out, "train-ldm", argv, dataclasses.asdict(cfg), cfg.seed, metrics)
    log_jsonl({"event": "train-ldm", **metrics})
    return 0


def _load_ldm(path):
    from .engine import load_arrays
    from .engine.rng import Rng
    from .diffusion import make_schedule
    from .nets import UNet, UNetConfig

    arrays, meta = load_arrays(path)
    model = UNet(UNetConfig(**meta["unet_config"]), Rng(0).stream("init"))
    model.ps.load_arrays(arrays)
    s = meta["schedule"]
    sched = make_schedule(s["T"], s["beta_start"], s["beta_end"])
    return model, sched, meta


def cmd_train_decoder(args, argv) -> int:
    from .dataset import DatasetManifest
    from .decoder import load_autoencoder, save_autoencoder, train_pbr_decoder
    from .nets import AutoencoderConfig

    manifest = DatasetManifest.load(args.manifest)
    encoder, heads, meta = load_autoencoder(args.ae)
    cfg = AutoencoderConfig(**meta["ae_config"])
    weights = {"w_map": args.w_map, "w_render": args.w_render}
    head, metrics = train_pbr_decoder(manifest, encoder, cfg, weights,
                                      steps=args.steps, seed=args.seed, lr=args.lr,
                                      log=log_jsonl)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    heads["pbr8"] = head
    save_autoencoder(out / "ae.ckpt", encoder, heads,
                     {"seed": args.seed, "manifest": str(args.manifest)})
    summary = {"map_l1": metrics["map_l1"], "render": metrics["render"],
               "rmse": metrics["rmse"]}
    _write_run_json(out, "train-decoder", argv,
                    {"steps": args.steps, "lr": args.lr, "w_map": args.w_map,
                     "w_render": args.w_render, "manifest": str(args.manifest),
                     "ae": str(args.ae)}, args.seed, summary)
    log_jsonl({"event": "train-decoder", **summary})
    return 0


def cmd_train_dehighlight(args, argv) -> int:
    from .decoder import (load_autoencoder, load_shaded_pairs, save_autoencoder,
                          train_dehighlight)
    from .nets import AutoencoderConfig

    pairs = load_shaded_pairs(Path(args.pairs) / "index.json")
    encoder, heads, meta = load_autoencoder(args.ae)
    cfg = AutoencoderConfig(**meta["ae_config"])
    head, metrics = train_dehighlight(pairs, encoder, cfg, mix_ratio=args.mix_ratio,
                                      steps=args.steps, seed=args.seed, lr=args.lr,
                                      log=log_jsonl, albedo_head=heads.get("albedo3"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    heads["dehighlight3"] = head
    save_autoencoder(out / "ae.ckpt", encoder, heads,
                     {"seed": args.seed, "pairs": str(args.pairs)})
    summary = {k: v for k, v in metrics.items() if not isinstance(v, list)}
    _write_run_json(out, "train-dehighlight", argv,
                    {"steps": args.steps, "lr": args.lr, "mix_ratio": args.mix_ratio,
                     "pairs": str(args.pairs), "ae": str(args.ae)}, args.seed, summary)
    log_jsonl({"event": "train-dehighlight", **summary})
    return 0


def cmd_render_shaded(args, argv) -> int:
    from .dataset import DatasetManifest
    from .render import render_shaded_dataset

    manifest = DatasetManifest.load(args.manifest)
    count = render_shaded_dataset(manifest, args.per_material, args.seed, args.out)
    _write_run_json(Path(args.out), "render-shaded", argv,
                    {"per_material": args.per_material, "manifest": str(args.manifest)},
                    args.seed, {"pairs": count})
    log_jsonl({"event": "render-shaded", "pairs": count})
    return 0


def cmd_sample(args, argv) -> int:
    from .dataset import parse_prompt
    from .decoder import decode_pbr, load_autoencoder
    from .diffusion import sample
    from .engine import Tensor
    from .materials import save_material
    from .render import render, sample_nine_views, tonemap, write_png
    from .tiling import tile_image

    model, sched, meta = _load_ldm(args.ckpt)
    encoder, heads, _ = load_autoencoder(meta["ae"] if args.ae is None else args.ae)
    if "pbr8" not in heads:
        raise SystemExit("checkpoint has no pbr8 decoder head; run train-decoder first")
    vocab_size = model.cfg.label_vocab
    from .dataset import CATEGORIES
    vocab = CATEGORIES[:vocab_size]
    if args.prompt:
        label = parse_prompt(args.prompt, vocab).category
    else:
        label = vocab.index(args.label) if args.label in vocab else int(args.label)

    latent_hw = meta["image_size"] // 4
    latents = sample(model, sched, label, args.n, args.seed, latent_hw=latent_hw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scale = meta["latent_scale"]
    for i, z in enumerate(latents):
        maps = decode_pbr(heads["pbr8"], z * scale)
        mat_dir = out / f"sample_{i:03d}"
        save_material(maps, mat_dir, meta={"id": f"sample_{i:03d}",
                                           "category": vocab[label],
                                           "prompt": f"a PBR material of {vocab[label]}"})
        views = sample_nine_views(args.seed + i)
        shots = [tonemap(render(maps, v).pixels) for v in views]
        rows = [np.concatenate(shots[r * 3:(r + 1) * 3], axis=1) for r in range(3)]
        write_png(mat_dir / "contact_sheet.png", np.concatenate(rows, axis=0))
        write_png(mat_dir / "tiled_2x2.png", tile_image(maps.albedo, 2, 2))
    _write_run_json(out, "sample", argv,
                    {"ckpt": str(args.ckpt), "label": vocab[label], "n": args.n},
                    args.seed, {"samples": args.n})
    log_jsonl({"event": "sample", "n": args.n, "label": vocab[label]})
    return 0


def cmd_render(args, argv) -> int:
    from .materials import load_material
    from .render import render, sample_nine_views, tonemap, write_png

    m = load_material(args.inp)
    views = sample_nine_views(args.views_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shots = []
    for i, v in enumerate(views):
        img = tonemap(render(m, v).pixels)
        write_png(out / f"view_{i}.png", img)
        shots.append(img)
    rows = [np.concatenate(shots[r * 3:(r + 1) * 3], axis=1) for r in range(3)]
    write_png(out / "contact_sheet.png", np.concatenate(rows, axis=0))
    _write_run_json(out, "render", argv, {"in": str(args.inp)}, args.views_seed,
                    {"views": len(views)})
    return 0


def cmd_tile_check(args, argv) -> int:
    from .materials import load_material
    from .tiling import seam_score

    path = Path(args.inp)
    if path.is_dir():
        m = load_material(path)
        report = seam_score(m.encoded_stack())
    else:
        from PIL import Image
        arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
        report = seam_score(arr)
    sys.stdout.write(json.dumps(report.to_dict()) + "\n")
    return 0


def cmd_augment(args, argv) -> int:
    from .augment import PlanarIsometry, apply_isometry, multi_scale_crop
    from .materials import load_material, save_material

    kind_map = {"fliph": "flip_h", "flipv": "flip_v", "rot90": "rot90",
                "rot180": "rot180", "rot270": "rot270"}
    m = load_material(args.inp)
    if args.op:
        m = apply_isometry(m, PlanarIsometry(kind_map[args.op]))
    if args.crop:
        parts = args.crop.split(",")
        if len(parts) != 4:
            raise SystemExit("--crop wants scale,anchor_i,anchor_j,out_res")
        scale = float(parts[0])
        anchor = (int(parts[1]), int(parts[2]))
        m = multi_scale_crop(m, scale, anchor, int(parts[3]))
    save_material(m, args.out)
    log_jsonl({"event": "augment", "op": args.op, "crop": args.crop, "out": str(args.out)})
    return 0


def cmd_eval_sr(args, argv) -> int:
    from .materials import load_material
    from .render import sample_nine_views
    from .sr import eval_sr, upscale_material

    low = load_material(args.inp)
    ref = load_material(args.ref)
    pred = upscale_material(low, args.factor, args.baseline)
    views = sample_nine_views(args.views_seed)
    report = eval_sr(pred, ref, views, baseline=args.baseline)
    sys.stdout.write(json.dumps(report.to_dict()) + "\n")
    return 0


def cmd_selftest(args, argv) -> int:
    from .selftest import run_selftest

    passed, failed, lines = run_selftest()
    for line in lines:
        sys.stdout.write(line + "\n")
    sys.stdout.write(f"selftest: {passed} passed, {failed} failed\n")
    return 0 if failed == 0 else 1


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matkit",
                                description="Desk-scale SVBRDF material generation toolkit")
    sub = p.add_subparsers(dest="subcommand", required=True)

    d = sub.add_parser("dataset-gen", help="generate the procedural material corpus")
    d.add_argument("--classes", type=int, default=5)
    d.add_argument("--per-class", type=int, required=True)
    d.add_argument("--res", type=int, default=64)
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_dataset_gen)

    t = sub.add_parser("train-ae", help="train the KL autoencoder on albedos")
    t.add_argument("--manifest", required=True)
    t.add_argument("--steps", type=int, default=800)
    t.add_argument("--lr", type=float, default=2e-3)
    t.add_argument("--base-channels", type=int, default=32)
    t.add_argument("--kl-weight", type=float, default=1e-6)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train_ae)

    t = sub.add_parser("train-ldm", help="train the latent diffusion model")
    t.add_argument("--config", help="JSON config file (LdmTrainConfig schema)")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--manifest")
    t.add_argument("--ae", required=True, help="autoencoder checkpoint")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train_ldm)

    t = sub.add_parser("train-decoder", help="train the rendering-aware PBR decoder")
    t.add_argument("--manifest", required=True)
    t.add_argument("--ae", required=True)
    t.add_argument("--steps", type=int, default=600)
    t.add_argument("--lr", type=float, default=2e-3)
    t.add_argument("--w-map", type=float, default=1.0)
    t.add_argument("--w-render", type=float, default=1.0)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train_decoder)

    t = sub.add_parser("train-dehighlight", help="train the highlight-aware albedo decoder")
    t.add_argument("--pairs", required=True, help="shaded dataset dir (from render-shaded)")
    t.add_argument("--ae", required=True)
    t.add_argument("--steps", type=int, default=400)
    t.add_argument("--lr", type=float, default=2e-3)
    t.add_argument("--mix-ratio", type=float, default=0.5)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train_dehighlight)

    t = sub.add_parser("render-shaded", help="render shaded/albedo training pairs")
    t.add_argument("--manifest", required=True)
    t.add_argument("--per-material", type=int, default=4)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_render_shaded)

    s = sub.add_parser("sample", help="sample materials from a trained LDM")
    s.add_argument("--ckpt", required=True, help="ldm checkpoint")
    s.add_argument("--ae", help="autoencoder checkpoint (defaults to the one in ckpt meta)")
    s.add_argument("--label", default="0", help="category name or index")
    s.add_argument("--prompt", help="'a PBR material of <category>, tags...'")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sample)

    r = sub.add_parser("render", help="render a material under the nine-view scheme")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--views-seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_render)

    c = sub.add_parser("tile-check", help="print the seam report of a material/image")
    c.add_argument("--in", dest="inp", required=True)
    c.set_defaults(fn=cmd_tile_check)

    a = sub.add_parser("augment", help="apply flips/rotations/crops to a material")
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--op", choices=["fliph", "flipv", "rot90", "rot180", "rot270"])
    a.add_argument("--crop", metavar="SCALE,I,J,OUT_RES")
    a.add_argument("--out", required=True)
    a.set_defaults(fn=cmd_augment)

    e = sub.add_parser("eval-sr", help="evaluate an upscaler against a reference")
    e.add_argument("--in", dest="inp", required=True, help="low-res material dir")
    e.add_argument("--ref", required=True, help="high-res reference material dir")
    e.add_argument("--factor", type=int, default=4)
    e.add_argument("--baseline", default="bicubic",
                   choices=["nearest", "bilinear", "bicubic"])
    e.add_argument("--views-seed", type=int, default=0)
    e.set_defaults(fn=cmd_eval_sr)

    s = sub.add_parser("selftest", help="run the built-in invariant checks")
    s.set_defaults(fn=cmd_selftest)
    return p


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args, argv)
    except MatkitError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    except (OSError, ValueError, KeyError) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))
