"""Procedural toy SVBRDF corpus: generation, manifests, balancing, prompts.

Five pattern families stand in for a real material library.  Every
generator produces exactly periodic maps (periods divide the resolution)
and keeps hard pattern edges away from the wrap boundary, so the ground
truth is tileable both structurally and under the seam-ratio metric.  A
fine alternating grain is mixed into albedo/roughness/height to give
adjacent-texel statistics a uniform floor.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Rng
from .engine.rng import _fnv1a64
from .errors import DataError, IoError, ParamError, PromptError, UnknownCategory
from .materials import MaterialMaps, save_material

CATEGORIES = ("checker", "stripes", "bricks", "dots", "noise")

GRAIN = 0.015  # amplitude of the (-1)^(i+j) texture grain


@dataclass
class GeneratorParams:
    """Knobs for one procedural material."""

    kind: str
    palette: list[tuple[float, float, float]]
    cell: int
    roughness_range: tuple[float, float]
    metallic: bool
    bump_amplitude: float = 0.5
    grain: float = GRAIN


@dataclass
class MaterialRecord:
    id: str
    directory: str
    category: str
    prompt: str
    split: str  # "train" | "test"


@dataclass
class DatasetManifest:
    records: list[MaterialRecord]
    category_vocabulary: list[str]
    seed: int

    def split_records(self, split: str) -> list[MaterialRecord]:
        return [r for r in self.records if r.split == split]

    def label_of(self, record: MaterialRecord) -> int:
        return self.category_vocabulary.index(record.category)

    def to_dict(self) -> dict:
        return {
            "vocabulary": list(self.category_vocabulary),
            "records": [{"id": r.id, "dir": r.directory, "category": r.category,
                         "prompt": r.prompt, "split": r.split} for r in self.records],
            "seed": self.seed,
        }

    def save(self, path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict(), indent=1))
        except OSError as e:
            raise IoError(f"cannot write manifest {path}: {e}") from e

    @staticmethod
    def load(path) -> "DatasetManifest":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise IoError(f"cannot read manifest {path}: {e}") from e
        records = [MaterialRecord(id=r["id"], directory=r["dir"], category=r["category"],
                                  prompt=r["prompt"], split=r["split"])
                   for r in raw["records"]]
        return DatasetManifest(records=records, category_vocabulary=list(raw["vocabulary"]),
                               seed=raw["seed"])


# -- pattern building blocks ---------------------------------------------------


def _grid(res: int):
    return np.meshgrid(np.arange(res), np.arange(res), indexing="ij")


def _grain_field(res: int, amplitude: float) -> np.ndarray:
    i, j = _grid(res)
    return amplitude * ((-1.0) ** ((i + j) % 2))


def _weave_field(res: int, amplitude: float) -> np.ndarray:
    # period-4 square waves: constant-magnitude central differences on both
    # axes, which gives normal maps a uniform gradient floor
    i, j = _grid(res)
    qi = ((i % 4) < 2).astype(np.float64)
    qj = ((j % 4) < 2).astype(np.float64)
    return amplitude * 0.5 * (qi + qj)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _value_noise(res: int, lattice: int, stream, octaves: int = 2) -> np.ndarray:
    """Periodic value noise in [0,1]: wrap-interpolated random lattices."""
    out = np.zeros((res, res))
    amp_total = 0.0
    amp = 1.0
    for o in range(octaves):
        cells = max(2, res // (lattice >> o) if (lattice >> o) >= 2 else res // 2)
        g = stream.uniform((cells, cells))
        scale = res // cells
        i, j = _grid(res)
        ci, cj = i // scale, j // scale
        fi = _smoothstep((i % scale) / scale)
        fj = _smoothstep((j % scale) / scale)
        g00 = g[ci % cells, cj % cells]
        g01 = g[ci % cells, (cj + 1) % cells]
        g10 = g[(ci + 1) % cells, cj % cells]
        g11 = g[(ci + 1) % cells, (cj + 1) % cells]
        top = g00 * (1 - fj) + g01 * fj
        bot = g10 * (1 - fj) + g11 * fj
        out += amp * (top * (1 - fi) + bot * fi)
        amp_total += amp
        amp *= 0.5
    return out / amp_total


def normal_from_height(height: np.ndarray, amplitude: float) -> np.ndarray:
    """normalize(-dh/dx, -dh/dy, 1) with circular central differences."""
    gx = (np.roll(height, -1, axis=1) - np.roll(height, 1, axis=1)) * 0.5
    gy_img = (np.roll(height, -1, axis=0) - np.roll(height, 1, axis=0)) * 0.5
    n = np.stack([-amplitude * gx, amplitude * gy_img, np.ones_like(gx)], axis=-1)
    return (n / np.linalg.norm(n, axis=-1, keepdims=True)).astype(np.float32)


def _lerp_color(a, b, t: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return a * (1.0 - t[..., None]) + b * t[..., None]


# -- per-kind pattern synthesis ----------------------------------------------------


def _pattern(kind: str, p: GeneratorParams, res: int, stream):
    """Return (albedo_base, height, aux) for one kind; aux drives metallic."""
    i, j = _grid(res)
    c = p.cell
    if kind == "checker":
        # diagonal checker: every grid line crosses edges at the same rate
        parity = ((i + j) // c + (j - i) // c) % 2
        t = parity.astype(np.float64)
        albedo = _lerp_color(p.palette[0], p.palette[1], t)
        # height stays off the diamond edges: their vertices align with the
        # wrap rows and would skew boundary gradient statistics
        height = 0.3 * _value_noise(res, c * 2, stream)
        return albedo, height, t
    if kind == "stripes":
        u = (i + j) % (2 * c)
        band = (u // c).astype(np.float64)
        tri = np.abs(u - c) / c  # periodic zigzag, continuous across wrap
        albedo = _lerp_color(p.palette[0], p.palette[1], band)
        return albedo, 1.0 - tri, band
    if kind == "bricks":
        bw, bh = 2 * c, c
        oy, ox = bh // 2, bw // 4
        # indices reduced mod the image size FIRST so the brick crossing the
        # wrap seam is a single brick (one id, one shade)
        row = ((i - oy) % res) // bh
        stagger = np.where(row % 2 == 0, 0, bw // 2)
        u = (j - ox + stagger) % res
        col = u // bw
        mortar_w = max(1, c // 4)
        in_mortar = (((i - oy) % bh) < mortar_w) | ((u % bw) < mortar_w)
        brick_key = (row * 131 + col * 31) % 7
        shade = 0.75 + 0.25 * (brick_key / 6.0)
        brick_rgb = np.asarray(p.palette[0])[None, None, :] * shade[..., None]
        mortar_rgb = np.asarray(p.palette[1])[None, None, :]
        albedo = np.where(in_mortar[..., None], mortar_rgb, brick_rgb)
        height = np.where(in_mortar, 0.0, 1.0) * 0.8 \
            + 0.2 * _value_noise(res, c, stream)
        return albedo, height, np.zeros((res, res))
    if kind == "dots":
        # offset dot lattice; gaussians evaluated with minimal-image distance
        half = c // 2
        centers = []
        for ci_ in range(res // c):
            for cj_ in range(res // c):
                offset = half if ci_ % 2 else 0
                centers.append((ci_ * c + half, (cj_ * c + half + offset) % res))
        centers = np.asarray(centers, dtype=np.float64)
        di = np.abs(i[..., None] - centers[:, 0])
        dj = np.abs(j[..., None] - centers[:, 1])
        di = np.minimum(di, res - di)
        dj = np.minimum(dj, res - dj)
        sigma = c * 0.22
        bump = np.exp(-(di ** 2 + dj ** 2) / (2.0 * sigma ** 2)).sum(axis=-1)
        t = np.clip(bump, 0.0, 1.0)
        albedo = _lerp_color(p.palette[0], p.palette[1], _smoothstep(t))
        return albedo, t, _smoothstep(t)
    if kind == "noise":
        t = _value_noise(res, c, stream, octaves=3)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
        albedo = _lerp_color(p.palette[0], p.palette[1], _smoothstep(t))
        return albedo, 0.5 * t, t
    raise ParamError(f"unknown generator kind {kind!r}")


def generate_material(p: GeneratorParams, res: int, seed: int) -> MaterialMaps:
    """Produce one exactly tileable material from generator parameters."""
    if res not in (32, 64, 128):
        raise ParamError(f"resolution {res} not in (32, 64, 128)")
    if p.kind not in CATEGORIES:
        raise ParamError(f"unknown kind {p.kind!r}")
    if p.kind in ("checker", "stripes") and res % (2 * p.cell):
        raise ParamError(f"pattern period {2 * p.cell} does not divide {res}")
    if p.kind == "bricks" and (res % (2 * p.cell) or res % (2 * p.cell * 2)):
        raise ParamError(f"brick period does not divide {res}")
    if p.kind in ("dots", "noise") and res % p.cell:
        raise ParamError(f"cell {p.cell} does not divide {res}")
    if len(p.palette) < 2:
        raise ParamError("palette needs at least 2 colors")

    stream = Rng(seed).stream(f"gen/{p.kind}")
    albedo, height, aux = _pattern(p.kind, p, res, stream)

    grain = _grain_field(res, p.grain)
    albedo = np.clip(albedo + grain[..., None], 0.0, 1.0)

    r_lo, r_hi = p.roughness_range
    roughness = r_lo + (r_hi - r_lo) * (1.0 - _smoothstep(height))
    roughness = np.clip(roughness + grain, 0.02, 0.98)[..., None]

    if p.kind == "bricks" or not p.metallic:
        metallic = np.zeros((res, res, 1))
    else:
        metallic = np.clip(aux * 0.9 + 0.05 + grain, 0.0, 1.0)[..., None]

    normal = normal_from_height(height + _weave_field(res, 0.15), p.bump_amplitude)
    return MaterialMaps(albedo=albedo.astype(np.float32), normal=normal,
                        roughness=roughness.astype(np.float32),
                        metallic=metallic.astype(np.float32))


# -- parameter sampling ----------------------------------------------------------


_HUE_FAMILIES = {
    "checker": (0.06, 0.15),
    "stripes": (0.52, 0.66),
    "bricks": (0.00, 0.05),
    "dots": (0.25, 0.42),
    "noise": (0.70, 0.88),
}


def _sample_color(stream, hue_range, value_range=(0.25, 0.9)):
    h = stream.uniform(lo=hue_range[0], hi=hue_range[1])
    s = stream.uniform(lo=0.35, hi=0.9)
    v = stream.uniform(lo=value_range[0], hi=value_range[1])
    rgb = colorsys.hsv_to_rgb(h % 1.0, s, v)
    return tuple(min(0.92, max(0.08, ch)) for ch in rgb)


def sample_params(kind: str, res: int, seed: int) -> GeneratorParams:
    """Draw class-plausible generator parameters."""
    stream = Rng(seed).stream(f"params/{kind}")
    hue = _HUE_FAMILIES[kind]
    palette = [_sample_color(stream, hue), _sample_color(stream, hue, (0.1, 0.6))]
    if kind == "bricks":
        palette[1] = tuple([0.55 + 0.2 * stream.uniform()] * 3)  # gray mortar
    cells = {"checker": (4, 8), "stripes": (4, 8), "bricks": (8, 16),
             "dots": (8, 16), "noise": (8, 16)}[kind]
    cell = cells[stream.randint(0, len(cells))]
    while (kind in ("checker", "stripes") and res % (2 * cell)) or \
          (kind == "bricks" and res % (4 * cell)) or \
          (kind in ("dots", "noise") and res % cell):
        cell //= 2
    r_lo = stream.uniform(lo=0.08, hi=0.4)
    r_hi = r_lo + stream.uniform(lo=0.2, hi=0.5)
    metallic = {"checker": 0.5, "stripes": 0.25, "bricks": 0.0,
                "dots": 0.5, "noise": 0.2}[kind] > stream.uniform()
    bump = stream.uniform(lo=0.3, hi=1.2)
    return GeneratorParams(kind=kind, palette=palette, cell=int(cell),
                           roughness_range=(float(r_lo), float(min(r_hi, 0.95))),
                           metallic=bool(metallic), bump_amplitude=float(bump))


def _prompt_for(params: GeneratorParams) -> str:
    tags = ["fine" if params.cell <= 4 else "coarse"]
    mid_rough = sum(params.roughness_range) / 2
    tags.append("glossy" if mid_rough < 0.3 else "matte")
    if params.metallic:
        tags.append("metallic")
    return f"a PBR material of {params.kind}, " + ", ".join(tags)


# -- dataset assembly ----------------------------------------------------------------


def build_dataset(n_per_class: int, res: int, seed: int, out) -> DatasetManifest:
    """Generate n_per_class materials per category under out/ with a manifest.

    Split is 90/10 train/test, deterministic by id hash.
    """
    if n_per_class < 1:
        raise DataError("n_per_class must be >= 1")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {out}: {e}") from e

    entries = []
    for kind in CATEGORIES:
        for k in range(n_per_class):
            mat_id = f"{kind}_{k:04d}"
            mat_seed = _fnv1a64(f"{seed}/{mat_id}") & 0x7FFFFFFFFFFFFFFF
            params = sample_params(kind, res, mat_seed)
            maps = generate_material(params, res, mat_seed)
            prompt = _prompt_for(params)
            directory = out / "materials" / mat_id
            save_material(maps, directory,
                          meta={"id": mat_id, "category": kind, "prompt": prompt})
            entries.append((mat_id, str(directory), kind, prompt))

    n_test = max(1, round(0.1 * len(entries)))
    by_hash = sorted(entries, key=lambda e: _fnv1a64(f"{seed}:{e[0]}"))
    test_ids = {e[0] for e in by_hash[:n_test]}
    records = [MaterialRecord(id=i, directory=d, category=c, prompt=pr,
                              split="test" if i in test_ids else "train")
               for i, d, c, pr in entries]
    manifest = DatasetManifest(records=records, category_vocabulary=list(CATEGORIES),
                               seed=seed)
    manifest.save(out / "manifest.json")
    return manifest


def balance_classes(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Duplicate records (fresh ids, same directories) until classes are even."""
    counts: dict[str, list[MaterialRecord]] = {}
    for r in manifest.records:
        counts.setdefault(r.category, []).append(r)
    target = max(len(v) for v in counts.values())
    stream = Rng(seed).stream("balance")
    new_records = list(manifest.records)
    existing = {r.id for r in new_records}
    for cat, recs in sorted(counts.items()):
        deficit = target - len(recs)
        for d in range(deficit):
            src = recs[int(stream.randint(0, len(recs)))]
            dup_id = f"{src.id}__dup{d}"
            while dup_id in existing:
                dup_id += "x"
            existing.add(dup_id)
            new_records.append(MaterialRecord(id=dup_id, directory=src.directory,
                                              category=src.category, prompt=src.prompt,
                                              split=src.split))
    return DatasetManifest(records=new_records,
                           category_vocabulary=list(manifest.category_vocabulary),
                           seed=manifest.seed)


# -- prompts -----------------------------------------------------------------------


PROMPT_PREFIX = "a pbr material of"


@dataclass
class ParsedPrompt:
    category: int
    category_name: str
    tags: list[str] = field(default_factory=list)


def parse_prompt(s: str, vocabulary=CATEGORIES) -> ParsedPrompt:
    """Parse 'a PBR material of <category>[, tag]*' against a vocabulary."""
    text = s.strip()
    if not text.lower().startswith(PROMPT_PREFIX):
        raise PromptError(f"prompt must start with 'a PBR material of': {s!r}")
    rest = text[len(PROMPT_PREFIX):].strip()
    if not rest:
        raise PromptError("prompt names no category")
    parts = [p.strip() for p in rest.split(",")]
    category = parts[0].lower()
    vocab_lower = [v.lower() for v in vocabulary]
    if category not in vocab_lower:
        raise UnknownCategory(f"category {parts[0]!r} not in vocabulary {list(vocabulary)}")
    return ParsedPrompt(category=vocab_lower.index(category),
                        category_name=vocabulary[vocab_lower.index(category)],
                        tags=[p for p in parts[1:] if p])


def subsample_tags(tags: list[str], ratio_range=(0.3, 1.0), seed: int = 0) -> list[str]:
    """Keep a random order-preserving fraction of tags (ratio drawn uniformly)."""
    if not tags:
        return []
    stream = Rng(seed).stream("tags")
    ratio = stream.uniform(lo=ratio_range[0], hi=ratio_range[1])
    keep = int(round(ratio * len(tags)))
    if keep >= len(tags):
        return list(tags)
    chosen = sorted(stream.choice(len(tags), keep).tolist())
    return [tags[i] for i in chosen]
