"""Super-resolution evaluation harness with deterministic baseline upscalers.

Any future learned upscaler plugs in as a MaterialMaps -> MaterialMaps
function; the harness scores per-map RMSE plus the nine-view log
rendering loss against a high-resolution reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .losses import log_l1_render_loss
from .materials import MaterialMaps, normalize_normals
from .render import RenderSetup, render

UPSCALERS = ("nearest", "bilinear", "bicubic")


@dataclass
class SrReport:
    """Per-map RMSE plus render-space agreement for one upscaler."""

    rmse_albedo: float
    rmse_normal: float
    rmse_roughness: float
    rmse_metallic: float
    render_log_l1: float
    baseline: str

    def to_dict(self) -> dict:
        return {
            "rmse": {"albedo": self.rmse_albedo, "normal": self.rmse_normal,
                     "roughness": self.rmse_roughness, "metallic": self.rmse_metallic},
            "render_log_l1": self.render_log_l1,
            "baseline": self.baseline,
        }


def downsample_material(m: MaterialMaps, factor: int) -> MaterialMaps:
    """Box-filter downsampling; normals renormalized after averaging."""
    if factor == 1:
        return m
    res = m.resolution
    if res % factor:
        raise ShapeError(f"factor {factor} does not divide resolution {res}")

    def box(arr):
        h, w, c = arr.shape
        return arr.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))

    return MaterialMaps(
        albedo=box(m.albedo),
        normal=normalize_normals(box(m.normal)),
        roughness=box(m.roughness),
        metallic=box(m.metallic),
    )


# -- interpolation kernels (wrap-around taps: materials are tileable) ----------------


def _resample_axis(arr: np.ndarray, factor: int, axis: int, method: str) -> np.ndarray:
    n = arr.shape[axis]
    out_n = n * factor
    coords = (np.arange(out_n) + 0.5) / factor - 0.5
    base = np.floor(coords).astype(int)
    frac = coords - base

    arr = np.moveaxis(arr, axis, 0)
    if method == "nearest":
        idx = np.round(coords).astype(int) % n
        out = arr[idx]
    elif method == "bilinear":
        a = arr[base % n]
        b = arr[(base + 1) % n]
        f = frac.reshape((-1,) + (1,) * (arr.ndim - 1))
        out = a * (1 - f) + b * f
    elif method == "bicubic":
        # Keys cubic kernel, a = -0.5
        def kernel(x):
            x = np.abs(x)
            w = np.where(x <= 1, 1.5 * x ** 3 - 2.5 * x ** 2 + 1,
                         np.where(x < 2, -0.5 * x ** 3 + 2.5 * x ** 2 - 4 * x + 2, 0.0))
            return w

        out = np.zeros((out_n,) + arr.shape[1:], dtype=np.float64)
        for tap in (-1, 0, 1, 2):
            w = kernel(frac - tap).reshape((-1,) + (1,) * (arr.ndim - 1))
            out += w * arr[(base + tap) % n]
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.moveaxis(out, 0, axis)


def upscale_material(m: MaterialMaps, factor: int, method: str = "bicubic") -> MaterialMaps:
    """Separable interpolation per channel; normals renormalized, values clamped."""
    if factor < 2:
        raise ValueError("upscale factor must be >= 2")
    if method not in UPSCALERS:
        raise ValueError(f"method must be one of {UPSCALERS}")

    def up(arr):
        out = _resample_axis(arr.astype(np.float64), factor, 0, method)
        return _resample_axis(out, factor, 1, method)

    return MaterialMaps(
        albedo=np.clip(up(m.albedo), 0.0, 1.0),
        normal=normalize_normals(up(m.normal)),
        roughness=np.clip(up(m.roughness), 0.0, 1.0),
        metallic=np.clip(up(m.metallic), 0.0, 1.0),
    )


def bicubic_upscale(m: MaterialMaps, factor: int) -> MaterialMaps:
    """The default deterministic baseline upscaler."""
    return upscale_material(m, factor, "bicubic")


def eval_sr(pred_hi: MaterialMaps, ref_hi: MaterialMaps, views: list[RenderSetup],
            baseline: str = "custom") -> SrReport:
    """Score an upscaled material against the high-resolution reference."""
    if pred_hi.resolution != ref_hi.resolution:
        raise ShapeError(f"resolutions differ: {pred_hi.resolution} vs {ref_hi.resolution}")

    def rmse(a, b):
        return float(np.sqrt(((a.astype(np.float64) - b.astype(np.float64)) ** 2).mean()))

    render_vals = [log_l1_render_loss(render(pred_hi, s), render(ref_hi, s)) for s in views]
    return SrReport(
        rmse_albedo=rmse(pred_hi.albedo, ref_hi.albedo),
        rmse_normal=rmse(pred_hi.normal, ref_hi.normal),
        rmse_roughness=rmse(pred_hi.roughness, ref_hi.roughness),
        rmse_metallic=rmse(pred_hi.metallic, ref_hi.metallic),
        render_log_l1=float(np.mean(render_vals)),
        baseline=baseline,
    )
