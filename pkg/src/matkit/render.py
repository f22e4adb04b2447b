"""Cook-Torrance GGX shading of flat material planes under point lights.

The material occupies the unit square [-1, 1]^2 at z = 0, with texel
centers mapped uniformly into the plane (+x = increasing column,
+y = decreasing row, +z out of the plane).  Radiance is linear HDR and
unclamped; display/export applies gamma 2.2.  The shading math runs
through the autodiff engine, so renders are differentiable with respect
to the material maps whenever those are passed in as tensors that
require gradients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import engine as E
from .engine import Rng, Tensor
from .errors import IoError
from .materials import MaterialMaps

ROUGHNESS_FLOOR = 0.01
D_MAX = 1e8
DIELECTRIC_F0 = 0.04


@dataclass(frozen=True)
class RenderSetup:
    """Camera, point light, and plane geometry for one render."""

    camera_pos: tuple[float, float, float]
    light_pos: tuple[float, float, float]
    light_intensity: float

    def __post_init__(self):
        if self.camera_pos[2] <= 0 or self.light_pos[2] <= 0:
            raise ValueError("camera and light must sit above the plane (z > 0)")
        if self.light_intensity <= 0:
            raise ValueError("light intensity must be positive")


@dataclass(frozen=True)
class RenderedImage:
    """H x W x 3 nonnegative linear radiance (unclamped HDR)."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.asarray(self.pixels))


def texel_centers(res: int, dtype=np.float32) -> np.ndarray:
    """World positions (res x res x 3) of texel centers on the plane."""
    step = 2.0 / res
    xs = -1.0 + (np.arange(res, dtype=np.float64) + 0.5) * step
    ys = 1.0 - (np.arange(res, dtype=np.float64) + 0.5) * step
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy, np.zeros_like(gx)], axis=-1).astype(dtype)


# -- BRDF pieces (shared tensor/ndarray path) ---------------------------------


def _ggx_d_t(n_dot_h, roughness):
    r = E.clamp(roughness, ROUGHNESS_FLOOR, 1.0)
    alpha = E.mul(r, r)
    a2 = E.mul(alpha, alpha)
    t = E.add(E.mul(E.mul(n_dot_h, n_dot_h), E.sub(a2, 1.0)), 1.0)
    d = E.div(a2, E.mul(t, t) * math.pi)
    return E.clamp(d, 0.0, D_MAX)


def _fresnel_t(h_dot_v, f0):
    one_minus = E.sub(1.0, h_dot_v)
    p2 = E.mul(one_minus, one_minus)
    p5 = E.mul(E.mul(p2, p2), one_minus)
    return E.add(f0, E.mul(E.sub(1.0, f0), p5))


def _smith_g1_t(n_dot_x, k):
    return E.div(n_dot_x, E.add(E.mul(n_dot_x, E.sub(1.0, k)), k))


def _smith_g_t(n_dot_l, n_dot_v, roughness):
    r = E.clamp(roughness, ROUGHNESS_FLOOR, 1.0)
    alpha = E.mul(r, r)
    k = E.mul(alpha, 0.5)
    return E.mul(_smith_g1_t(n_dot_l, k), _smith_g1_t(n_dot_v, k))


def _dot3(a, b):
    return E.sum_(E.mul(a, b), axis=-1, keepdims=True)


def shade(albedo, normal, roughness, metallic, l: np.ndarray, v: np.ndarray) -> Tensor:
    """Evaluate the BRDF for unit directions l, v (no cosine/irradiance factor).

    Map arguments may be Tensors (differentiable) or arrays; l and v are
    constant geometry.  Texels facing away from light or camera return 0.
    """
    albedo = albedo if isinstance(albedo, Tensor) else Tensor(albedo)
    normal = normal if isinstance(normal, Tensor) else Tensor(normal)
    roughness = roughness if isinstance(roughness, Tensor) else Tensor(roughness)
    metallic = metallic if isinstance(metallic, Tensor) else Tensor(metallic)
    dt = albedo.dtype
    l = np.asarray(l, dtype=dt)
    v = np.asarray(v, dtype=dt)

    h_raw = l + v
    h_norm = np.sqrt(np.sum(h_raw * h_raw, axis=-1, keepdims=True))
    h = h_raw / np.maximum(h_norm, 1e-12)

    n_dot_l = _dot3(normal, l)
    n_dot_v = _dot3(normal, v)
    n_dot_h = E.clamp(_dot3(normal, h), 0.0, 1.0)
    h_dot_v = np.clip(np.sum(h * v, axis=-1, keepdims=True), 0.0, 1.0)

    visible = (n_dot_l.data > 0.0) & (n_dot_v.data > 0.0) & (h_norm > 1e-12)
    nl = E.clamp(n_dot_l, 1e-9, 1.0)
    nv = E.clamp(n_dot_v, 1e-9, 1.0)

    f0 = E.add(E.mul(E.sub(1.0, metallic), DIELECTRIC_F0), E.mul(albedo, metallic))
    fresnel = _fresnel_t(Tensor(h_dot_v), f0)
    d = _ggx_d_t(n_dot_h, roughness)
    g = _smith_g_t(nl, nv, roughness)

    specular = E.div(E.mul(E.mul(d, fresnel), g), E.mul(E.mul(nl, nv), 4.0))
    diffuse = E.mul(E.mul(E.sub(1.0, fresnel), E.sub(1.0, metallic)),
                    E.mul(albedo, 1.0 / math.pi))
    f = E.add(diffuse, specular)
    return E.where(visible, f, E.Tensor(np.zeros_like(f.data)))


def ggx_d(n_dot_h: float, roughness: float) -> float:
    """GGX normal distribution (alpha = roughness^2), capped at 1e8."""
    return float(_ggx_d_t(Tensor(np.float64(n_dot_h)), Tensor(np.float64(roughness))).data)


def fresnel_schlick(h_dot_v: float, f0):
    """Schlick Fresnel: f0 + (1 - f0) (1 - h.v)^5, per channel."""
    out = _fresnel_t(Tensor(np.float64(h_dot_v)), Tensor(np.asarray(f0, dtype=np.float64)))
    return out.data if out.data.ndim else float(out.data)


def smith_g(n_dot_l: float, n_dot_v: float, roughness: float) -> float:
    """Smith-Schlick geometry term with k = roughness^2 / 2."""
    out = _smith_g_t(Tensor(np.float64(n_dot_l)), Tensor(np.float64(n_dot_v)),
                     Tensor(np.float64(roughness)))
    return float(out.data)


def brdf_eval(albedo, normal, roughness, metallic, l, v) -> np.ndarray:
    """BRDF value for one configuration (rgb).  Zero when n.l or n.v <= 0."""
    albedo = np.asarray(albedo, dtype=np.float64)
    out = shade(Tensor(albedo), Tensor(np.asarray(normal, dtype=np.float64)),
                Tensor(np.float64(roughness)), Tensor(np.float64(metallic)),
                np.asarray(l, dtype=np.float64), np.asarray(v, dtype=np.float64))
    return out.data


# -- plane rendering -----------------------------------------------------------


def render_tensors(albedo, normal, roughness, metallic, setup: RenderSetup) -> Tensor:
    """Differentiable render of (H, W, *) map tensors under one setup."""
    ref = albedo if isinstance(albedo, Tensor) else Tensor(albedo)
    res = ref.shape[0]
    dt = ref.dtype
    pos = texel_centers(res, dtype=np.float64)
    to_light = np.asarray(setup.light_pos, dtype=np.float64) - pos
    dist_sq = np.sum(to_light * to_light, axis=-1, keepdims=True)
    l = to_light / np.sqrt(dist_sq)
    to_cam = np.asarray(setup.camera_pos, dtype=np.float64) - pos
    v = to_cam / np.sqrt(np.sum(to_cam * to_cam, axis=-1, keepdims=True))

    f = shade(albedo, normal, roughness, metallic, l.astype(dt), v.astype(dt))
    n = normal if isinstance(normal, Tensor) else Tensor(normal)
    cos_term = E.relu(E.sum_(E.mul(n, Tensor(l.astype(dt))), axis=-1, keepdims=True))
    irradiance = (setup.light_intensity / dist_sq).astype(dt)
    return E.mul(f, E.mul(cos_term, Tensor(irradiance)))


def render(m: MaterialMaps, setup: RenderSetup) -> RenderedImage:
    """Render a material plane under a point light (no shadows, no bounce)."""
    out = render_tensors(m.albedo, m.normal, m.roughness, m.metallic, setup)
    return RenderedImage(pixels=out.data)


def setup_geometry(setups: list[RenderSetup], res: int, dtype=np.float32):
    """Stacked (V,res,res,*) light dirs, view dirs, and irradiance factors."""
    pos = texel_centers(res, dtype=np.float64)
    ls, vs, irr = [], [], []
    for s in setups:
        to_light = np.asarray(s.light_pos, dtype=np.float64) - pos
        dist_sq = np.sum(to_light * to_light, axis=-1, keepdims=True)
        ls.append(to_light / np.sqrt(dist_sq))
        to_cam = np.asarray(s.camera_pos, dtype=np.float64) - pos
        vs.append(to_cam / np.sqrt(np.sum(to_cam * to_cam, axis=-1, keepdims=True)))
        irr.append(s.light_intensity / dist_sq)
    return (np.stack(ls).astype(dtype), np.stack(vs).astype(dtype),
            np.stack(irr).astype(dtype))


def render_views(albedo, normal, roughness, metallic, geometry) -> Tensor:
    """Differentiable render of one material under V stacked views at once.

    Map arguments are (H,W,C) tensors/arrays; geometry comes from
    setup_geometry.  Returns a (V,H,W,3) radiance tensor.
    """
    l, v, irr = geometry
    f = shade(albedo, normal, roughness, metallic, l, v)
    n = normal if isinstance(normal, Tensor) else Tensor(normal)
    cos_term = E.relu(E.sum_(E.mul(n, Tensor(l)), axis=-1, keepdims=True))
    return E.mul(f, E.mul(cos_term, Tensor(irr)))


def tonemap(pixels: np.ndarray) -> np.ndarray:
    """Gamma 2.2 + clamp to [0,1] for display/export of linear radiance."""
    return np.power(np.clip(pixels, 0.0, 1.0), 1.0 / 2.2)


# -- view sampling ---------------------------------------------------------------


DISTANT_RADIUS = 50.0
NEAR_INTENSITY = 4.0


def _cosine_hemisphere(stream, n: int) -> np.ndarray:
    u1 = stream.uniform((n,))
    u2 = stream.uniform((n,))
    r = np.sqrt(u1)
    theta = 2.0 * np.pi * u2
    z = np.maximum(np.sqrt(np.maximum(1.0 - u1, 0.0)), 1e-3)
    dirs = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=-1)
    return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)


def sample_nine_views(seed: int) -> list[RenderSetup]:
    """Nine render setups: 3 distant independent views, 6 near-field collocated.

    Distant setups place camera and light at radius 50 along independent
    cosine-weighted upper-hemisphere directions, with intensity scaled by
    distance^2 so plane irradiance stays O(1).  Near-field setups collocate
    camera and light at z in [1,3], x,y in [-1,1], intensity 4.
    """
    rng = Rng(seed)
    distant = rng.stream("distant")
    near = rng.stream("near")
    views: list[RenderSetup] = []
    light_dirs = _cosine_hemisphere(distant, 3)
    cam_dirs = _cosine_hemisphere(distant, 3)
    for i in range(3):
        views.append(RenderSetup(
            camera_pos=tuple(DISTANT_RADIUS * cam_dirs[i]),
            light_pos=tuple(DISTANT_RADIUS * light_dirs[i]),
            light_intensity=DISTANT_RADIUS ** 2,
        ))
    for _ in range(6):
        x = near.uniform(lo=-1.0, hi=1.0)
        y = near.uniform(lo=-1.0, hi=1.0)
        z = near.uniform(lo=1.0, hi=3.0)
        pos = (x, y, z)
        views.append(RenderSetup(camera_pos=pos, light_pos=pos,
                                 light_intensity=NEAR_INTENSITY))
    return views


def sample_near_view(stream) -> RenderSetup:
    """One collocated near-field setup drawn from an existing stream."""
    x = stream.uniform(lo=-1.0, hi=1.0)
    y = stream.uniform(lo=-1.0, hi=1.0)
    z = stream.uniform(lo=1.0, hi=3.0)
    return RenderSetup(camera_pos=(x, y, z), light_pos=(x, y, z),
                       light_intensity=NEAR_INTENSITY)


# -- shaded-pair dataset for the highlight decoder --------------------------------


def write_png(path, values01: np.ndarray) -> None:
    arr = np.round(np.clip(values01, 0.0, 1.0) * 255.0).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    try:
        Image.fromarray(arr, mode="L" if arr.ndim == 2 else "RGB").save(path)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def render_shaded_dataset(manifest, per_material: int, seed: int, out) -> int:
    """Render shaded/albedo training pairs for the highlight-aware decoder.

    For every manifest record, renders `per_material` images under random
    near-field collocated setups, writing gamma-2.2 clamped shot PNGs next
    to the reference albedo, plus a JSON index of all pairs.  Returns the
    number of pairs written.
    """
    from .materials import load_material

    if per_material < 1:
        raise ValueError("per_material must be >= 1")
    records = manifest.records
    if not records:
        raise ValueError("manifest is empty")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {out}: {e}") from e

    index = []
    count = 0
    for rec in records:
        stream = Rng(seed).stream(f"shaded/{rec.id}")
        m = load_material(rec.directory)
        mat_dir = out / rec.id
        mat_dir.mkdir(parents=True, exist_ok=True)
        write_png(mat_dir / "albedo_ref.png", m.albedo)
        for k in range(per_material):
            setup = sample_near_view(stream)
            img = render(m, setup)
            shot = f"shot_{k}.png"
            write_png(mat_dir / shot, tonemap(img.pixels))
            index.append({
                "material": rec.id,
                "shaded": str(mat_dir / shot),
                "albedo": str(mat_dir / "albedo_ref.png"),
                "split": rec.split,
            })
            count += 1
    (out / "index.json").write_text(json.dumps({"pairs": index}, indent=1))
    return count
