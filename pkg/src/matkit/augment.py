"""Normal-map-consistent geometric augmentation on the dihedral group D4.

Rotations are restricted to 90-degree multiples so the texel grid maps
onto itself exactly and render equivariance can be tested bitwise-tight.
The six named transforms of the public surface (identity, two flips,
three rotations) generate the two diagonal reflections as compositions,
so the full 8-element group is represented internally to keep the group
law closed.
"""

from __future__ import annotations

import numpy as np

from .errors import CropError, ShapeError
from .materials import MaterialMaps, normalize_normals
from .render import RenderSetup

# 2x2 signed-permutation action on (x, y); columns are images of ex, ey.
_MATRICES = {
    "identity": ((1, 0), (0, 1)),
    "rot90": ((0, -1), (1, 0)),
    "rot180": ((-1, 0), (0, -1)),
    "rot270": ((0, 1), (-1, 0)),
    "flip_h": ((-1, 0), (0, 1)),
    "flip_v": ((1, 0), (0, -1)),
    "flip_d": ((0, 1), (1, 0)),     # reflection across y = x
    "flip_a": ((0, -1), (-1, 0)),   # reflection across y = -x
}

_BY_MATRIX = {m: k for k, m in _MATRICES.items()}

PUBLIC_KINDS = ("identity", "flip_h", "flip_v", "rot90", "rot180", "rot270")
ALL_KINDS = tuple(_MATRICES)


class PlanarIsometry:
    """One element of D4, identified by kind name."""

    def __init__(self, kind: str):
        if kind not in _MATRICES:
            raise ValueError(f"unknown isometry {kind!r}; choose from {ALL_KINDS}")
        self.kind = kind
        self.matrix = _MATRICES[kind]

    def __eq__(self, other):
        return isinstance(other, PlanarIsometry) and other.kind == self.kind

    def __hash__(self):
        return hash(self.kind)

    def __repr__(self):
        return f"PlanarIsometry({self.kind!r})"

    def apply_xy(self, x: float, y: float) -> tuple[float, float]:
        (a, b), (c, d) = self.matrix
        return (a * x + b * y, c * x + d * y)


def compose(second: PlanarIsometry, first: PlanarIsometry) -> PlanarIsometry:
    """The isometry equal to applying `first` then `second`."""
    (a, b), (c, d) = second.matrix
    (e, f), (g, h) = first.matrix
    prod = ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))
    return PlanarIsometry(_BY_MATRIX[prod])


def inverse(t: PlanarIsometry) -> PlanarIsometry:
    (a, b), (c, d) = t.matrix
    # orthogonal integer matrix: inverse is the transpose
    return PlanarIsometry(_BY_MATRIX[((a, c), (b, d))])


def permute_grid(arr: np.ndarray, t: PlanarIsometry) -> np.ndarray:
    """Apply the texel-grid permutation of t to an (H, W, ...) array."""
    k = t.kind
    if k == "identity":
        out = arr
    elif k == "rot90":
        out = np.rot90(arr, 1)
    elif k == "rot180":
        out = np.rot90(arr, 2)
    elif k == "rot270":
        out = np.rot90(arr, 3)
    elif k == "flip_h":
        out = arr[:, ::-1]
    elif k == "flip_v":
        out = arr[::-1, :]
    elif k == "flip_a":
        out = arr.swapaxes(0, 1)
    else:  # flip_d
        out = arr[::-1, ::-1].swapaxes(0, 1)
    return np.ascontiguousarray(out)


def transform_normals(normal: np.ndarray, t: PlanarIsometry) -> np.ndarray:
    """Rotate/reflect tangent-space normal vectors (z untouched)."""
    (a, b), (c, d) = t.matrix
    nx, ny, nz = normal[..., 0], normal[..., 1], normal[..., 2]
    return np.stack([a * nx + b * ny, c * nx + d * ny, nz], axis=-1)


def apply_isometry(m: MaterialMaps, t: PlanarIsometry,
                   adjust_normals: bool = True) -> MaterialMaps:
    """Permute the texel grid by t and transform the normal vectors to match.

    adjust_normals=False deliberately skips the vector transform; it exists
    as a negative control for the equivariance tests and must not be used
    for real augmentation.
    """
    if m.albedo.shape[0] != m.albedo.shape[1]:
        raise ShapeError("isometries require square maps")
    normal = permute_grid(m.normal, t)
    if adjust_normals:
        normal = transform_normals(normal, t)
    return MaterialMaps(
        albedo=permute_grid(m.albedo, t),
        normal=normal,
        roughness=permute_grid(m.roughness, t),
        metallic=permute_grid(m.metallic, t),
    )


def transform_setup(s: RenderSetup, t: PlanarIsometry) -> RenderSetup:
    """Move camera/light in-plane coordinates with the texel permutation."""
    cx, cy = t.apply_xy(s.camera_pos[0], s.camera_pos[1])
    lx, ly = t.apply_xy(s.light_pos[0], s.light_pos[1])
    return RenderSetup(camera_pos=(cx, cy, s.camera_pos[2]),
                       light_pos=(lx, ly, s.light_pos[2]),
                       light_intensity=s.light_intensity)


# -- multi-scale cropping -------------------------------------------------------


def _resize_bilinear(src: np.ndarray, out_res: int) -> np.ndarray:
    """Pixel-center-aligned bilinear resize of an (H, W, C) array."""
    h, w = src.shape[:2]
    scale_y = h / out_res
    scale_x = w / out_res
    ys = (np.arange(out_res) + 0.5) * scale_y - 0.5
    xs = (np.arange(out_res) + 0.5) * scale_x - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def multi_scale_crop(m: MaterialMaps, scale: float, anchor: tuple[int, int] | None,
                     out_res: int, seed: int = 0) -> MaterialMaps:
    """Crop a scale*H window (random anchor when None) and resize to out_res.

    Bilinear filtering; normals renormalized after interpolation.
    """
    if not (0.0 < scale <= 1.0):
        raise CropError(f"scale {scale} outside (0, 1]")
    if out_res < 8:
        raise CropError(f"out_res {out_res} below minimum 8")
    res = m.resolution
    win = max(2, int(round(scale * res)))
    if anchor is None:
        from .engine import Rng
        stream = Rng(seed).stream("crop")
        anchor = (int(stream.randint(0, res - win + 1)), int(stream.randint(0, res - win + 1)))
    i0, j0 = anchor
    if i0 < 0 or j0 < 0 or i0 + win > res or j0 + win > res:
        raise CropError(f"window {win} at {anchor} escapes {res}x{res} maps")

    def crop_resize(arr):
        return _resize_bilinear(arr[i0:i0 + win, j0:j0 + win], out_res).astype(np.float32)

    normal = normalize_normals(crop_resize(m.normal))
    return MaterialMaps(
        albedo=np.clip(crop_resize(m.albedo), 0.0, 1.0),
        normal=normal,
        roughness=np.clip(crop_resize(m.roughness), 0.0, 1.0),
        metallic=np.clip(crop_resize(m.metallic), 0.0, 1.0),
    )
