"""SVBRDF data model, texel encodings, and the on-disk material format.

A material is the map tuple {albedo, normal, roughness, metallic} on a
square texel grid.  On disk it is a directory of four 8-bit PNGs plus a
material.json with {id, category, prompt}.  Albedo PNGs are sRGB-encoded;
normal/roughness/metallic PNGs are linear.  In memory everything is
linear float32 in [0, 1], normals as unit vectors with positive z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidNormal, IoError, MissingMap, ResolutionMismatch

MAP_FILES = {
    "albedo": "albedo.png",
    "normal": "normal.png",
    "roughness": "roughness.png",
    "metallic": "metallic.png",
}

META_FILE = "material.json"


# -- color / normal encodings ----------------------------------------------


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Linear [0,1] -> sRGB [0,1] (IEC 61966-2-1 piecewise curve)."""
    l = np.clip(linear, 0.0, 1.0)
    return np.where(l <= 0.0031308, 12.92 * l, 1.055 * np.power(l, 1.0 / 2.4) - 0.055)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    """sRGB [0,1] -> linear [0,1]."""
    s = np.clip(encoded, 0.0, 1.0)
    return np.where(s <= 0.04045, s / 12.92, np.power((s + 0.055) / 1.055, 2.4))


def encode_normal(n: np.ndarray) -> np.ndarray:
    """Unit tangent-space normal -> [0,1]^3 via (n + 1) / 2."""
    return (n + 1.0) * 0.5


def decode_normal(enc: np.ndarray) -> np.ndarray:
    """[0,1]^3 -> renormalized unit normal via 2*enc - 1."""
    n = 2.0 * enc - 1.0
    norm = np.sqrt(np.sum(n * n, axis=-1, keepdims=True))
    return n / np.maximum(norm, 1e-12)


def normalize_normals(n: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(n * n, axis=-1, keepdims=True))
    return n / np.maximum(norm, 1e-12)


# -- the material value type -------------------------------------------------


@dataclass(frozen=True)
class MaterialMaps:
    """Immutable SVBRDF map tuple on a square texel grid."""

    albedo: np.ndarray     # H x W x 3, linear color in [0,1]
    normal: np.ndarray     # H x W x 3, unit vectors, z > 0
    roughness: np.ndarray  # H x W x 1 in [0,1]
    metallic: np.ndarray   # H x W x 1 in [0,1]

    def __post_init__(self):
        for name in ("albedo", "normal", "roughness", "metallic"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def resolution(self) -> int:
        return self.albedo.shape[0]

    def encoded_stack(self) -> np.ndarray:
        """H x W x 8 stack: albedo, encoded normal, roughness, metallic."""
        return np.concatenate(
            [self.albedo, encode_normal(self.normal), self.roughness, self.metallic],
            axis=-1).astype(np.float32)

    @staticmethod
    def from_encoded_stack(stack: np.ndarray) -> "MaterialMaps":
        """Inverse of encoded_stack; renormalizes the normal channels."""
        return MaterialMaps(
            albedo=np.clip(stack[..., 0:3], 0.0, 1.0),
            normal=decode_normal(np.clip(stack[..., 3:6], 0.0, 1.0)),
            roughness=np.clip(stack[..., 6:7], 0.0, 1.0),
            metallic=np.clip(stack[..., 7:8], 0.0, 1.0),
        )


@dataclass
class Violation:
    """One invariant breach found by validate()."""

    map: str
    texel: tuple[int, int] | None
    rule: str

    def __str__(self):
        where = f" at {self.texel}" if self.texel is not None else ""
        return f"{self.rule}({self.map}{where})"


def _first_bad_texel(mask: np.ndarray) -> tuple[int, int]:
    idx = np.argwhere(mask)
    i, j = idx[0][:2]
    return int(i), int(j)


def validate(m: MaterialMaps) -> list[Violation]:
    """Check all MaterialMaps invariants; empty list means valid."""
    out: list[Violation] = []
    res = m.albedo.shape[:2]
    for name in ("albedo", "normal", "roughness", "metallic"):
        arr = getattr(m, name)
        if arr.shape[:2] != res or res[0] != res[1]:
            out.append(Violation(name, None, "resolution"))
        bad = ~np.isfinite(arr)
        if bad.any():
            out.append(Violation(name, _first_bad_texel(bad.any(axis=-1)), "non-finite"))
    for name in ("albedo", "roughness", "metallic"):
        arr = getattr(m, name)
        bad = (arr < 0.0) | (arr > 1.0)
        if bad.any():
            out.append(Violation(name, _first_bad_texel(bad.any(axis=-1)), "range"))
    norms = np.sqrt(np.sum(m.normal.astype(np.float64) ** 2, axis=-1))
    bad_norm = np.abs(norms - 1.0) > 1e-4
    if bad_norm.any():
        out.append(Violation("normal", _first_bad_texel(bad_norm), "unit-length"))
    bad_z = m.normal[..., 2] <= 0.0
    if bad_z.any():
        out.append(Violation("normal", _first_bad_texel(bad_z), "invalid-normal"))
    return out


# -- disk IO ------------------------------------------------------------------


def _to_png8(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def _write_png(path: Path, arr8: np.ndarray) -> None:
    if arr8.ndim == 3 and arr8.shape[2] == 1:
        arr8 = arr8[:, :, 0]
    mode = "L" if arr8.ndim == 2 else "RGB"
    try:
        Image.fromarray(arr8, mode=mode).save(path)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _read_png(path: Path, channels: int) -> np.ndarray:
    if not path.exists():
        raise MissingMap(f"missing map file {path}")
    try:
        img = Image.open(path)
        img = img.convert("RGB" if channels == 3 else "L")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if channels == 1:
        arr = arr[:, :, None]
    return arr


def save_material(m: MaterialMaps, directory, meta: dict | None = None) -> None:
    """Write the four map PNGs (albedo sRGB, others linear) plus material.json."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {directory}: {e}") from e
    _write_png(directory / MAP_FILES["albedo"], _to_png8(srgb_encode(m.albedo)))
    _write_png(directory / MAP_FILES["normal"], _to_png8(encode_normal(m.normal)))
    _write_png(directory / MAP_FILES["roughness"], _to_png8(m.roughness))
    _write_png(directory / MAP_FILES["metallic"], _to_png8(m.metallic))
    if meta is not None:
        try:
            (directory / META_FILE).write_text(json.dumps(meta, indent=1))
        except OSError as e:
            raise IoError(f"cannot write metadata: {e}") from e


def load_material(directory) -> MaterialMaps:
    """Load a material directory written by save_material.

    Albedo is linearized from sRGB; normals are decoded via 2*enc - 1 and
    renormalized; roughness/metallic are read as linear grayscale.
    """
    directory = Path(directory)
    albedo = srgb_decode(_read_png(directory / MAP_FILES["albedo"], 3))
    normal_enc = _read_png(directory / MAP_FILES["normal"], 3)
    roughness = _read_png(directory / MAP_FILES["roughness"], 1)
    metallic = _read_png(directory / MAP_FILES["metallic"], 1)

    shapes = {albedo.shape[:2], normal_enc.shape[:2], roughness.shape[:2], metallic.shape[:2]}
    if len(shapes) != 1:
        raise ResolutionMismatch(f"maps in {directory} have mixed resolutions: {shapes}")
    h, w = next(iter(shapes))
    if h != w:
        raise ResolutionMismatch(f"maps in {directory} are not square: {(h, w)}")

    normal = decode_normal(normal_enc)
    if np.any(normal[..., 2] <= 0.0):
        raise InvalidNormal(f"normal map in {directory} decodes to z <= 0")
    return MaterialMaps(albedo=albedo.astype(np.float32), normal=normal.astype(np.float32),
                        roughness=roughness, metallic=metallic)


def load_meta(directory) -> dict:
    path = Path(directory) / META_FILE
    if not path.exists():
        return {}
    return json.loads(path.read_text())
