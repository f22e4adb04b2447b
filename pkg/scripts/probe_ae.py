"""Dev probe: AE reconstruction quality vs width/steps on the toy corpus."""

import sys
import time
from pathlib import Path

from matkit.dataset import build_dataset, DatasetManifest
from matkit.decoder import train_autoencoder
from matkit.nets import AutoencoderConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/probe_ae")
out.mkdir(parents=True, exist_ok=True)
ds_dir = out / "ds"
if (ds_dir / "manifest.json").exists():
    manifest = DatasetManifest.load(ds_dir / "manifest.json")
else:
    manifest = build_dataset(20, 64, 101, ds_dir)
print("dataset ready", len(manifest.records), flush=True)

for base, steps in [(16, 900), (24, 900)]:
    cfg = AutoencoderConfig(base_channels=base)
    t0 = time.time()
    enc, head, metrics = train_autoencoder(manifest, cfg, steps=steps, seed=7)
    dt = time.time() - t0
    tail = sum(metrics["train_l1_trace"][-50:]) / 50
    print(f"base={base} steps={steps}: test_l1={metrics['test_l1']:.4f} "
          f"train_tail={tail:.4f} time={dt/60:.1f}min", flush=True)
